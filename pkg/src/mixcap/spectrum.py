"""Exact and Monte-Carlo evaluation of information-spectrum tails and bounds.

The n-letter information density of a memoryless channel against a product
reference is a sum of independent per-letter atoms, so its law is computed by
exact n-fold convolution (binary powering with atom merging).  The
achievability and converse bounds are evaluated from those tails; true
mixtures, whose output law is not a product, get explicitly flagged
upper-bound surrogates with logarithmic penalties.

Boundary convention: a tail at threshold z includes atoms within
``BOUNDARY_TOL`` of n z (absolute, on the total), and the Monte-Carlo sampler
applies the same rule, so the two paths agree on lattice spectra.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import Dmc, InputDist, MixedChannel, SlackParams, output_distribution
from .optimizer import ConvergenceError
from .types_toolkit import TypeClass

BOUNDARY_TOL = 1e-9
ATOM_CAP = 10**6
PAIR_CAP = 4 * 10**7
MC_CHUNK = 4096

KIND_FEINSTEIN = "feinstein"
KIND_HN = "hayashi_nagaoka"
KIND_MIXED_CONVERSE = "mixed_converse"
KIND_EXACT_TAIL = "exact_tail"


class DominationError(ValueError):
    """The reference output gives zero mass to a reachable output letter."""


@dataclass(frozen=True)
class AtomDist:
    """A finite distribution on the reals: sorted values with probabilities."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1:
            raise ValueError("values and probs must be equal-length vectors")
        if np.any(~np.isfinite(v)):
            raise ValueError("atom values must be finite")
        order = np.argsort(v, kind="stable")
        v, p = v[order].copy(), p[order].copy()
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @property
    def total_mass(self) -> float:
        return float(self.probs.sum())

    def mean(self) -> float:
        return float(self.values @ self.probs)

    def cdf_at(self, threshold: float, boundary_tol: float = BOUNDARY_TOL) -> float:
        idx = np.searchsorted(self.values, threshold + boundary_tol, side="right")
        return float(self.probs[:idx].sum())


@dataclass(frozen=True)
class SpectrumCdf:
    """Per-letter information-density atoms plus their exact n-fold sum."""

    per_letter: AtomDist
    n: int
    aggregate: AtomDist
    mass_error: float

    def __post_init__(self):
        if abs(self.aggregate.total_mass - 1.0) > 1e-9:
            raise ValueError("aggregate mass drifted beyond 1e-9")

    def tail_leq(self, z_per_letter: float) -> float:
        """P{(1/n) sum <= z}, boundary handled at BOUNDARY_TOL on the total."""
        return self.aggregate.cdf_at(z_per_letter * self.n)


@dataclass(frozen=True)
class CodeParams:
    """Blocklength, code size and rate; the rate is log(m)/n in nats."""

    n: int
    rate: float
    m: int | None = None
    composition: TypeClass | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("blocklength must be at least 1")
        if self.m is not None:
            if self.m < 1:
                raise ValueError("need at least one codeword")
            if abs(self.rate - math.log(self.m) / self.n) > 1e-12:
                raise ValueError("rate must equal log(m)/n within 1e-12")

    @staticmethod
    def from_codewords(n: int, m: int, composition: TypeClass | None = None) -> "CodeParams":
        return CodeParams(n, math.log(m) / n, m, composition)

    @staticmethod
    def from_rate(n: int, rate: float, composition: TypeClass | None = None) -> "CodeParams":
        # rate sweeps keep the rate primary; no integer size is attached
        return CodeParams(n, rate, None, composition)


@dataclass(frozen=True)
class BoundEstimate:
    value: float
    kind: str
    stderr: float = 0.0
    trials: int = 0
    seed: int = 0
    note: str = ""

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("bound value must lie in [0, 1]")
        if self.trials == 0 and self.stderr != 0.0:
            raise ValueError("exact estimates must have zero stderr")


PROB_FLOOR = 1e-300  # atoms below this carry no representable mass


def merge_atoms(values: np.ndarray, probs: np.ndarray, merge_tol: float) -> AtomDist:
    """Sort and merge atoms whose values are within merge_tol of a neighbor.

    Merged atoms take the probability-weighted mean value, so exact lattice
    spectra stay on the lattice up to rounding noise.  Atoms whose mass falls
    below PROB_FLOOR are dropped: subnormal weights would otherwise poison the
    weighted means and break the lattice structure.
    """
    keep = probs > PROB_FLOOR
    values, probs = values[keep], probs[keep]
    order = np.argsort(values, kind="stable")
    v = values[order]
    p = probs[order]
    if len(v) == 0:
        return AtomDist(v, p)
    if merge_tol > 0.0:
        breaks = np.flatnonzero(np.diff(v) > merge_tol)
    else:
        breaks = np.flatnonzero(np.diff(v) > 0.0)
    starts = np.concatenate(([0], breaks + 1))
    mass = np.add.reduceat(p, starts)
    weighted = np.add.reduceat(v * p, starts)
    merged_v = weighted / mass
    keep = mass > PROB_FLOOR
    return AtomDist(merged_v[keep], mass[keep])


def per_letter_spectrum(x_source, w: Dmc, q) -> AtomDist:
    """Atoms of log(W(y|x)/q(y)) with their probabilities.

    ``x_source`` is either an input distribution (letters drawn i.i.d.) or a
    fixed input letter.  The reference q must dominate every reachable output;
    a violation is reported with the offending (x, y) pair.
    """
    q = np.asarray(q, dtype=float)
    if isinstance(x_source, InputDist):
        px = x_source.probs
    else:
        px = np.zeros(w.num_inputs)
        px[int(x_source)] = 1.0
    values, probs = [], []
    for x in range(w.num_inputs):
        if px[x] <= 0.0:
            continue
        for y in range(w.num_outputs):
            pr = px[x] * w.rows[x, y]
            if pr <= 0.0:
                continue
            if q[y] <= 0.0:
                raise DominationError(
                    f"reference output has zero mass at y={y}, reachable from x={x}")
            values.append(math.log(w.rows[x, y]) - math.log(q[y]))
            probs.append(pr)
    return merge_atoms(np.array(values), np.array(probs), 0.0)


def _convolve_pair(a: AtomDist, b: AtomDist, merge_tol: float,
                   atom_cap: int = ATOM_CAP) -> AtomDist:
    if len(a.values) * len(b.values) > PAIR_CAP:
        raise ConvergenceError(
            f"convolution would form {len(a.values) * len(b.values)} atom pairs; "
            "use the Monte-Carlo path")
    values = (a.values[:, None] + b.values[None, :]).ravel()
    probs = (a.probs[:, None] * b.probs[None, :]).ravel()
    out = merge_atoms(values, probs, merge_tol)
    if len(out.values) > atom_cap:
        raise ConvergenceError(
            f"{len(out.values)} atoms exceed the cap {atom_cap}; "
            "use the Monte-Carlo path")
    return out


def default_merge_tol(atoms: AtomDist, n: int) -> float:
    scale = max(1.0, float(np.max(np.abs(atoms.values))) if len(atoms.values) else 1.0)
    return 1e-12 * n * scale


def convolve_n(atoms: AtomDist, n: int, merge_tol: float | None = None,
               atom_cap: int = ATOM_CAP) -> AtomDist:
    """Exact distribution of the sum of n i.i.d. copies, by binary powering."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if merge_tol is None:
        merge_tol = default_merge_tol(atoms, n)
    result = None
    base = atoms
    m = n
    while m > 0:
        if m & 1:
            result = base if result is None else _convolve_pair(result, base, merge_tol, atom_cap)
        m >>= 1
        if m:
            base = _convolve_pair(base, base, merge_tol, atom_cap)
    return result


def aggregate_spectrum(w: Dmc, input_spec, q, n: int,
                       merge_tol: float | None = None,
                       atom_cap: int = ATOM_CAP) -> SpectrumCdf:
    """Exact n-letter spectrum for an i.i.d. input or a fixed composition."""
    if isinstance(input_spec, TypeClass):
        if input_spec.n != n:
            raise ValueError("composition blocklength does not match n")
        agg = None
        parts = []
        for x, cnt in enumerate(input_spec.counts):
            if cnt == 0:
                continue
            atoms_x = per_letter_spectrum(x, w, q)
            parts.append((atoms_x, int(cnt)))
        tol = merge_tol
        if tol is None:
            scale = max(1.0, max(float(np.max(np.abs(a.values))) for a, _ in parts))
            tol = 1e-12 * n * scale
        for atoms_x, cnt in parts:
            powered = convolve_n(atoms_x, cnt, tol, atom_cap)
            agg = powered if agg is None else _convolve_pair(agg, powered, tol, atom_cap)
        per_letter = merge_atoms(
            np.concatenate([a.values for a, _ in parts]),
            np.concatenate([a.probs * (c / n) for a, c in parts]), 0.0)
    else:
        per_letter = per_letter_spectrum(input_spec, w, q)
        agg = convolve_n(per_letter, n, merge_tol, atom_cap)
    return SpectrumCdf(per_letter, n, agg, abs(agg.total_mass - 1.0))


def normal_approx(n: int, c_first: float, d_second: float) -> float:
    """Two-term estimate of log M*: n c + sqrt(n) d, in total nats."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return n * c_first + math.sqrt(n) * d_second


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def _as_mixed(channel) -> MixedChannel:
    return channel if isinstance(channel, MixedChannel) else MixedChannel.singleton(channel)


def _clip01(v: float) -> float:
    return min(max(v, 0.0), 1.0)


def feinstein_bound(
    channel,
    p: InputDist,
    code: CodeParams,
    slack: SlackParams,
    merge_tol: float | None = None,
    mc_trials: int | None = None,
    seed: int = 0,
    threads: int = 1,
) -> BoundEstimate:
    """Achievability: P{density <= rate + eta} + exp(-n eta).

    Exact for a single component with i.i.d. input, where the output law is
    the product (PW)^n.  For true mixtures the mixed output law is not a
    product; each component is evaluated against the pointwise maximum of the
    component output laws, with log(K)/n and log(1/w_k)/n threshold penalties.
    That surrogate upper-bounds the original expression and is flagged.
    """
    mixed = _as_mixed(channel)
    n, eta = code.n, slack.eta
    z = code.rate + eta
    leak = math.exp(-n * eta)
    if mixed.num_atoms == 1:
        w = mixed.components[0]
        q = output_distribution(p, w)
        tail, stderr, trials = _tail_or_mc(w, p, q, n, z, merge_tol, mc_trials, seed, threads)
        return BoundEstimate(_clip01(tail + leak), KIND_FEINSTEIN, stderr, trials, seed)

    outs = np.array([output_distribution(p, comp) for comp in mixed.components])
    q_max = outs.max(axis=0)
    big_k = math.log(mixed.num_atoms) / n
    total, var = 0.0, 0.0
    trials_total = 0
    for w_k, comp in mixed.atoms:
        pen = big_k + math.log(1.0 / w_k) / n
        tail, stderr, trials = _tail_or_mc(comp, p, q_max, n, z + pen,
                                           merge_tol, mc_trials, seed, threads)
        total += w_k * tail
        var += (w_k * stderr) ** 2
        trials_total += trials
    return BoundEstimate(
        _clip01(total + leak), KIND_FEINSTEIN, math.sqrt(var), trials_total, seed,
        note="mixed-output surrogate: per-component max-envelope reference with log penalties")


def hayashi_nagaoka_bound(
    channel,
    code: CodeParams,
    q,
    slack: SlackParams,
    input_spec=None,
    q_family: str = "product",
    merge_tol: float | None = None,
    mc_trials: int | None = None,
    seed: int = 0,
    threads: int = 1,
) -> BoundEstimate:
    """Converse: P{density <= rate - eta} - exp(-n eta), clipped to [0, 1].

    ``q`` is a single-letter reference; ``q_family`` may be "product" or
    "type-mixture" (the latter shifts the threshold by -log(N_n + 1)/n and
    keeps q as the extra reference term, a valid single-reference evaluation
    of the mixture-of-types family).  For true mixtures the component laws
    are replaced by their pointwise maximum (flagged), which keeps the
    converse direction.
    """
    mixed = _as_mixed(channel)
    n, eta = code.n, slack.eta
    input_spec = input_spec if input_spec is not None else code.composition
    if input_spec is None:
        raise ValueError("need an input spec: pass input_spec or set code.composition")
    z = code.rate - eta
    note = ""
    if q_family == "type-mixture":
        from .types_toolkit import count_types

        z -= math.log(count_types(mixed.num_inputs, n) + 1) / n
        note = "type-mixture family via single-reference evaluation"
    elif q_family != "product":
        raise ValueError(f"unknown q family {q_family!r}")
    leak = math.exp(-n * eta)

    if mixed.num_atoms == 1:
        w = mixed.components[0]
        tail, stderr, trials = _tail_or_mc(w, input_spec, q, n, z, merge_tol,
                                           mc_trials, seed, threads)
        return BoundEstimate(_clip01(tail - leak), KIND_HN, stderr, trials, seed, note)

    # pointwise maximum of the component laws: not stochastic, used only as
    # the numerator inside the statistic, which keeps the converse direction
    env = np.stack([comp.rows for comp in mixed.components]).max(axis=0)
    total, var, trials_total = 0.0, 0.0, 0
    for w_k, comp in mixed.atoms:
        tail, stderr, trials = _tail_or_mc(
            comp, input_spec, q, n, z - math.log(mixed.num_atoms) / n,
            merge_tol, mc_trials, seed, threads, numer=env)
        total += w_k * tail
        var += (w_k * stderr) ** 2
        trials_total += trials
    joined = ("; " if note else "") + "mixed-law surrogate: max-envelope numerator"
    return BoundEstimate(_clip01(total - leak), KIND_HN, math.sqrt(var),
                         trials_total, seed, note + joined)


def mixed_converse_bound(
    mixed: MixedChannel,
    code: CodeParams,
    q_list,
    slack: SlackParams,
    input_spec=None,
    merge_tol: float | None = None,
    mc_trials: int | None = None,
    seed: int = 0,
    threads: int = 1,
) -> BoundEstimate:
    """Mixture converse: weighted per-component tails minus exp(-n eta).

    Each component is compared against its own product reference, so every
    tail is an exact convolution (no surrogate needed); for a singleton this
    coincides with the plain converse bound.
    """
    mixed = _as_mixed(mixed)
    n, eta = code.n, slack.eta
    input_spec = input_spec if input_spec is not None else code.composition
    if input_spec is None:
        raise ValueError("need an input spec: pass input_spec or set code.composition")
    if len(q_list) != mixed.num_atoms:
        raise ValueError("need one reference output per component")
    z = code.rate - eta
    leak = math.exp(-n * eta)
    total, var, trials_total = 0.0, 0.0, 0
    for (w_k, comp), q in zip(mixed.atoms, q_list):
        tail, stderr, trials = _tail_or_mc(comp, input_spec, q, n, z, merge_tol,
                                           mc_trials, seed, threads)
        total += w_k * tail
        var += (w_k * stderr) ** 2
        trials_total += trials
    return BoundEstimate(_clip01(total - leak), KIND_MIXED_CONVERSE,
                         math.sqrt(var), trials_total, seed)


def exact_tail_bound(mixed, code: CodeParams, q_list, input_spec=None,
                     merge_tol: float | None = None) -> BoundEstimate:
    """Weighted exact spectrum tail at the code rate (no slack terms)."""
    mixed = _as_mixed(mixed)
    input_spec = input_spec if input_spec is not None else code.composition
    if input_spec is None:
        raise ValueError("need an input spec: pass input_spec or set code.composition")
    total = 0.0
    for (w_k, comp), q in zip(mixed.atoms, q_list):
        spec = aggregate_spectrum(comp, input_spec, q, code.n, merge_tol)
        total += w_k * spec.tail_leq(code.rate)
    return BoundEstimate(_clip01(total), KIND_EXACT_TAIL)


def _tail_or_mc(w: Dmc, input_spec, q, n, z, merge_tol, mc_trials, seed, threads,
                numer: np.ndarray | None = None):
    """Exact tail via convolution, falling back to MC when atoms blow up.

    ``numer`` substitutes the matrix inside the log while sampling still
    follows ``w`` (used by the mixture surrogates).
    """
    try:
        if numer is None:
            spec = aggregate_spectrum(w, input_spec, q, n, merge_tol)
            return spec.tail_leq(z), 0.0, 0
        agg = _aggregate_with_numerator(w, numer, input_spec, q, n, merge_tol)
        return agg.cdf_at(z * n), 0.0, 0
    except ConvergenceError:
        if mc_trials is None:
            raise
    est = mc_tail(w, input_spec, q, n, z, mc_trials, seed, threads=threads, numer=numer)
    return est.value, est.stderr, est.trials


def _numer_atoms(x: int, w: Dmc, numer: np.ndarray, q) -> AtomDist:
    q = np.asarray(q, dtype=float)
    values, probs = [], []
    for y in range(w.num_outputs):
        pr = w.rows[x, y]
        if pr <= 0.0:
            continue
        if q[y] <= 0.0:
            raise DominationError(
                f"reference output has zero mass at y={y}, reachable from x={x}")
        values.append(math.log(numer[x, y]) - math.log(q[y]))
        probs.append(pr)
    return merge_atoms(np.array(values), np.array(probs), 0.0)


def _aggregate_with_numerator(w: Dmc, numer: np.ndarray, input_spec, q, n, merge_tol):
    if isinstance(input_spec, TypeClass):
        parts = [( _numer_atoms(x, w, numer, q), int(c))
                 for x, c in enumerate(input_spec.counts) if c > 0]
    else:
        px = input_spec.probs
        vals, prs = [], []
        for x in range(w.num_inputs):
            if px[x] <= 0.0:
                continue
            a = _numer_atoms(x, w, numer, q)
            vals.append(a.values)
            prs.append(a.probs * px[x])
        parts = [(merge_atoms(np.concatenate(vals), np.concatenate(prs), 0.0), n)]
    tol = merge_tol
    if tol is None:
        scale = max(1.0, max(float(np.max(np.abs(a.values))) for a, _ in parts))
        tol = 1e-12 * n * scale
    agg = None
    for atoms_x, cnt in parts:
        powered = convolve_n(atoms_x, cnt, tol)
        agg = powered if agg is None else _convolve_pair(agg, powered, tol)
    return agg


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


def _sampling_blocks(w: Dmc, input_spec, q, n, numer: np.ndarray | None):
    """Per-letter sampling tables: list of (count, cum_probs, values)."""
    blocks = []
    if isinstance(input_spec, TypeClass):
        for x, cnt in enumerate(input_spec.counts):
            if cnt == 0:
                continue
            a = per_letter_spectrum(x, w, q) if numer is None else _numer_atoms(x, w, numer, q)
            blocks.append((int(cnt), np.cumsum(a.probs), a.values))
    else:
        if numer is None:
            a = per_letter_spectrum(input_spec, w, q)
        else:
            a = _aggregate_with_numerator(w, numer, input_spec, q, 1, 0.0)
        blocks.append((n, np.cumsum(a.probs), a.values))
    return blocks


def mc_tail(
    w: Dmc,
    input_spec,
    q,
    n: int,
    threshold: float,
    trials: int,
    seed: int,
    threads: int = 1,
    chunk: int = MC_CHUNK,
    numer: np.ndarray | None = None,
) -> BoundEstimate:
    """Unbiased MC estimate of P{(1/n) sum of density <= threshold}.

    Uses one counter-based generator stream per fixed-size chunk of trials,
    so results are bit-identical for any thread count.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if threshold == math.inf:
        return BoundEstimate(1.0, KIND_EXACT_TAIL, 0.0, 0, seed)
    if threshold == -math.inf:
        return BoundEstimate(0.0, KIND_EXACT_TAIL, 0.0, 0, seed)
    blocks = _sampling_blocks(w, input_spec, q, n, numer)
    cut = threshold * n + BOUNDARY_TOL

    def run_chunk(c: int) -> int:
        lo = c * chunk
        size = min(chunk, trials - lo)
        rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, c]))
        sums = np.zeros(size)
        for cnt, cum, values in blocks:
            u = rng.random((size, cnt))
            idx = np.searchsorted(cum, u, side="right")
            np.clip(idx, 0, len(values) - 1, out=idx)
            sums += values[idx].sum(axis=1)
        return int(np.count_nonzero(sums <= cut))

    n_chunks = (trials + chunk - 1) // chunk
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = sum(pool.map(run_chunk, range(n_chunks)))
    else:
        hits = sum(run_chunk(c) for c in range(n_chunks))
    p_hat = hits / trials
    stderr = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / trials)
    return BoundEstimate(p_hat, KIND_EXACT_TAIL, stderr, trials, seed)
