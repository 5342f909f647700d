"""Blind source separation technique suite.

Every technique maps a :class:`~bssnmr.synth.MixtureDataset` and a requested
component count k to a :class:`ComponentSet`: k predicted spectra plus the
per-spectrum mixing coefficients.  Outputs carry arbitrary sign and scale;
all quality statements are made after affine alignment (see scoring).

Technique identifiers are stable strings such as ``svd``, ``fastica``,
``nnmf:nndsvdar``, ``simplisma:offset8`` or ``mcr:nnls:random``.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import TechniqueFailure
from .numkernel import joint_diagonalize, nnls, seeded_rng, svd
from .synth import MixtureDataset

NNMF_INITS = ("random", "nndsvd", "nndsvda", "nndsvdar")
SIMPLISMA_OFFSETS = (0, 2, 8, 12, 15)
MCR_REGRESSIONS = ("ols_als", "nnls")
MCR_INITS = ("provided", "random")


@dataclass(frozen=True)
class TechniqueId:
    family: str
    variant: str = ""

    def __post_init__(self):
        if self.name not in technique_names():
            raise ValueError(f"unknown technique {self.name!r}; "
                             f"valid: {', '.join(technique_names())}")

    @property
    def name(self) -> str:
        return f"{self.family}:{self.variant}" if self.variant else self.family

    def __str__(self):
        return self.name


def technique_names() -> tuple:
    """Every legal technique identifier string."""
    names = ["svd", "truncated_svd", "pca", "fastica", "jade", "sobi", "vca"]
    names += [f"nnmf:{init}" for init in NNMF_INITS]
    names += [f"simplisma:offset{off}" for off in SIMPLISMA_OFFSETS]
    for reg in MCR_REGRESSIONS:
        names += [f"mcr:{reg}", f"mcr:{reg}:random"]
    return tuple(names)


def parse_technique(name: str) -> TechniqueId:
    name = name.strip()
    family, _, variant = name.partition(":")
    return TechniqueId(family=family, variant=variant)


@dataclass(eq=False)
class ComponentSet:
    """Output of one technique: k predicted spectra and mixing weights."""

    components: np.ndarray = field(repr=False)     # (k, n_points)
    coefficients: np.ndarray = field(repr=False)   # (n_spectra, k)
    technique: TechniqueId
    k_requested: int
    converged: bool = True
    runtime_seconds: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.components.shape[0]


def decompose(dataset: MixtureDataset, technique, k: int, seed: int = 0) -> ComponentSet:
    """Run one technique on one dataset, timing the call.

    Techniques that internally produce more components than requested keep
    the top k by explained variance.  Iterative techniques that fail to
    converge return their last iterate flagged ``converged=False``; a
    technique unable to produce any output raises
    :class:`~bssnmr.errors.TechniqueFailure`.
    """
    if isinstance(technique, str):
        technique = parse_technique(technique)
    if not 1 <= k <= dataset.n_spectra:
        raise ValueError(f"k must lie in [1, {dataset.n_spectra}]")

    start = time.perf_counter()
    family, variant = technique.family, technique.variant
    if family in ("svd", "truncated_svd", "pca"):
        result = svd_like(dataset, k, centered=(family == "pca"))
    elif family == "fastica":
        result = fastica(dataset, k, seed)
    elif family == "jade":
        result = jade(dataset, k)
    elif family == "sobi":
        result = sobi(dataset, k)
    elif family == "vca":
        result = vca(dataset, k, seed)
    elif family == "nnmf":
        result = nnmf(dataset, k, init=variant, seed=seed)
    elif family == "simplisma":
        result = simplisma(dataset, k, offset_percent=int(variant[len("offset"):]))
    else:
        reg, _, init = variant.partition(":")
        result = mcr(dataset, k, regression=reg, init=init or "provided", seed=seed)
    result.technique = technique
    result.k_requested = k
    result.runtime_seconds = time.perf_counter() - start
    return result


# ---------------------------------------------------------------------------
# subspace techniques
# ---------------------------------------------------------------------------

def svd_like(dataset: MixtureDataset, k: int, centered: bool = False) -> ComponentSet:
    """Raw (SVD / truncated SVD) or column-centered (PCA) singular vectors.

    Components are the top-k right singular vectors; coefficients are the
    corresponding scores U * S.
    """
    x = dataset.spectra
    mean = x.mean(axis=0, keepdims=True) if centered else None
    u, s, vt = svd(x - mean if centered else x)
    comps = vt[:k].copy()
    coeff = u[:, :k] * s[:k]
    meta = {"singular_values": s.tolist(), "centered": centered}
    return ComponentSet(components=comps, coefficients=coeff,
                        technique=TechniqueId("pca" if centered else "svd"),
                        k_requested=k, converged=True, meta=meta)


# ---------------------------------------------------------------------------
# ICA family
# ---------------------------------------------------------------------------

def _whiten(x: np.ndarray, k: int, center: bool = False):
    """Whiten to k dimensions via the thin SVD.

    Returns (z, back): z is (k, n_samples) with unit second moment, and
    back @ z reconstructs the (optionally row-centered) data in the k-dim
    subspace.  Whitening about the origin keeps any common-mode offset
    inside the mixing span instead of discarding it.
    """
    if center:
        x = x - x.mean(axis=1, keepdims=True)
    n_samples = x.shape[1]
    u, s, vt = svd(x)
    z = np.sqrt(n_samples) * vt[:k]
    back = u[:, :k] * (s[:k] / np.sqrt(n_samples))
    return z, back


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(w @ w.T)
    vals = np.maximum(vals, np.finfo(float).tiny)
    return (vecs * (1.0 / np.sqrt(vals))) @ vecs.T @ w


def fastica(dataset: MixtureDataset, k: int, seed: int = 0,
            tol: float = 1e-6, max_iter: int = 400) -> ComponentSet:
    """Fixed-point ICA with log-cosh contrast and symmetric decorrelation.

    The frequency axis provides the samples; unmixed sources are returned
    as the predicted component spectra.
    """
    z, back = _whiten(dataset.spectra, k)
    n = z.shape[1]
    rng = seeded_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((k, k)))
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        wz = w @ z
        g = np.tanh(wz)
        g_prime = 1.0 - g ** 2
        w_new = _sym_decorrelate((g @ z.T) / n - g_prime.mean(axis=1)[:, None] * w)
        delta = float(np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0)))
        w = w_new
        if delta < tol:
            converged = True
            break
    comps = w @ z
    coeff = back @ w.T
    meta = {"iterations": iterations}
    return ComponentSet(components=comps, coefficients=coeff,
                        technique=TechniqueId("fastica"), k_requested=k,
                        converged=converged, meta=meta)


def jade(dataset: MixtureDataset, k: int) -> ComponentSet:
    """Joint approximate diagonalization of fourth-order cumulant matrices."""
    z, back = _whiten(dataset.spectra, k)
    n = z.shape[1]
    eye = np.eye(k)
    cumulants = []
    for i in range(k):
        for j in range(i, k):
            q = (z * z[i] * z[j]) @ z.T / n
            if i == j:
                q -= eye
            q[i, j] -= 1.0
            q[j, i] -= 1.0
            cumulants.append(q)
    jd = joint_diagonalize(cumulants)
    comps = jd.V.T @ z
    coeff = back @ jd.V
    meta = {"sweeps": jd.sweeps, "off_diagonal": jd.off_diagonal[-1]}
    return ComponentSet(components=comps, coefficients=coeff,
                        technique=TechniqueId("jade"), k_requested=k,
                        converged=jd.converged, meta=meta)


def sobi(dataset: MixtureDataset, k: int, lags=(1, 2, 3, 4, 5)) -> ComponentSet:
    """Second-order blind identification along the spectrum-index axis.

    The 20 spectra are treated as the sample series of every frequency
    channel, so the lagged covariances capture how smoothly each source's
    intensity evolves across the dataset (relaxation or nutation order).
    """
    n_spectra = dataset.n_spectra
    if max(lags) >= n_spectra:
        raise ValueError(f"lags must be smaller than the spectrum count {n_spectra}")
    # channels = frequency bins, samples = spectrum index
    z, back = _whiten(dataset.spectra.T, k, center=True)
    t = z.shape[1]
    lagged = []
    for lag in lags:
        r = z[:, : t - lag] @ z[:, lag:].T / (t - lag)
        lagged.append(0.5 * (r + r.T))
    jd = joint_diagonalize(lagged)
    profiles = jd.V.T @ z                     # (k, n_spectra)
    comps = (back @ jd.V).T                   # (k, n_points)
    coeff = profiles.T                        # (n_spectra, k)
    meta = {"lags": list(lags), "sweeps": jd.sweeps}
    return ComponentSet(components=comps, coefficients=coeff,
                        technique=TechniqueId("sobi"), k_requested=k,
                        converged=jd.converged, meta=meta)


# ---------------------------------------------------------------------------
# vertex component analysis
# ---------------------------------------------------------------------------

def vca(dataset: MixtureDataset, k: int, seed: int = 0) -> ComponentSet:
    """Iterative extreme-point selection in the k-dim signal subspace.

    The 20 mixture spectra are the candidate vertices.  Depending on the
    estimated SNR the data are projected onto the k-dim subspace of the
    correlation matrix (projective normalization) or onto the (k-1)-dim
    affine subspace with an appended constant coordinate.
    """
    y = dataset.spectra.T                     # (n_points, n_spectra)
    n_bands, n_vecs = y.shape
    rng = seeded_rng(seed)

    y_mean = y.mean(axis=1, keepdims=True)
    y_centered = y - y_mean
    u_c, s_c, _ = svd(y_centered)
    x_p = u_c[:, :k].T @ y_centered
    p_y = float(np.sum(y ** 2)) / n_vecs
    p_x = float(np.sum(x_p ** 2)) / n_vecs + float(np.sum(y_mean ** 2))
    denom = p_y - p_x
    if denom <= 0:
        snr_db = np.inf
    else:
        snr_db = 10.0 * np.log10(max(p_x - (k / n_bands) * p_y, 0.0) / denom
                                 + np.finfo(float).tiny)
    snr_threshold = 15.0 + 10.0 * np.log10(k)

    if k > 1 and snr_db < snr_threshold:
        branch = "affine"
        d = k - 1
        x = u_c[:, :d].T @ y_centered
        y_proj = u_c[:, :d] @ x + y_mean
        c = float(np.max(np.sqrt(np.sum(x ** 2, axis=0))))
        work = np.vstack([x, c * np.ones((1, n_vecs))])
    else:
        branch = "projective"
        u_r, _, _ = svd(y)
        ud = u_r[:, :k]
        x = ud.T @ y
        y_proj = ud @ x
        u_dir = x.mean(axis=1, keepdims=True)
        scale = x.T @ u_dir
        scale[scale == 0.0] = np.finfo(float).tiny
        work = x / scale.T

    if k == 1:
        indices = [int(np.argmax(np.abs(x[0])))]
    else:
        indices = []
        a = np.zeros((k, k))
        a[-1, 0] = 1.0
        for i in range(k):
            w = rng.standard_normal((k, 1))
            f = w - a @ np.linalg.pinv(a) @ w
            norm = float(np.sqrt(np.sum(f ** 2)))
            if norm == 0.0:
                raise TechniqueFailure("vca found no direction orthogonal to "
                                       "the selected vertices")
            f /= norm
            v = (f.T @ work).ravel()
            idx = int(np.argmax(np.abs(v)))
            indices.append(idx)
            a[:, i] = work[:, idx]

    comps = y_proj[:, indices].T
    coeff, *_ = np.linalg.lstsq(comps.T, dataset.spectra.T, rcond=None)
    meta = {"snr_db": float(snr_db), "branch": branch, "vertex_rows": indices}
    return ComponentSet(components=comps, coefficients=coeff.T,
                        technique=TechniqueId("vca"), k_requested=k,
                        converged=True, meta=meta)


# ---------------------------------------------------------------------------
# nonnegative matrix factorization
# ---------------------------------------------------------------------------

def flip_negative_rows(x: np.ndarray):
    """Invert rows carrying more negative than positive intensity."""
    neg = -np.sum(np.minimum(x, 0.0), axis=1)
    pos = np.sum(np.maximum(x, 0.0), axis=1)
    flip = neg > pos
    signs = np.where(flip, -1.0, 1.0)
    return x * signs[:, None], np.flatnonzero(flip)


def shift_nonnegative(x: np.ndarray):
    """Offset the whole matrix by a constant so every entry is >= 0."""
    low = float(x.min())
    offset = -low if low < 0 else 0.0
    return x + offset, offset


def nnmf_preprocess(x: np.ndarray, flip: bool = True, offset: bool = True):
    """Negative-intensity preprocessing: row flips, then a global offset."""
    flipped_rows = np.array([], dtype=int)
    shift = 0.0
    if flip:
        x, flipped_rows = flip_negative_rows(x)
    if offset:
        x, shift = shift_nonnegative(x)
    else:
        x = np.maximum(x, 0.0)
    return x, flipped_rows, shift


def nndsvd_init(x: np.ndarray, k: int, variant: str, rng) -> tuple:
    """SVD-seeded nonnegative initialization (zeros kept, averaged or jittered)."""
    u, s, vt = svd(x)
    m, n = x.shape
    w = np.zeros((m, k))
    h = np.zeros((k, n))
    w[:, 0] = np.sqrt(s[0]) * np.abs(u[:, 0])
    h[0] = np.sqrt(s[0]) * np.abs(vt[0])
    for j in range(1, min(k, s.size)):
        uj, vj = u[:, j], vt[j]
        up, un = np.maximum(uj, 0.0), np.maximum(-uj, 0.0)
        vp, vn = np.maximum(vj, 0.0), np.maximum(-vj, 0.0)
        norm_p = np.linalg.norm(up) * np.linalg.norm(vp)
        norm_n = np.linalg.norm(un) * np.linalg.norm(vn)
        if norm_p >= norm_n:
            scale, uu, vv = norm_p, up, vp
        else:
            scale, uu, vv = norm_n, un, vn
        if scale > 0:
            factor = np.sqrt(s[j] * scale)
            w[:, j] = factor * uu / np.linalg.norm(uu)
            h[j] = factor * vv / np.linalg.norm(vv)
    if variant == "nndsvda":
        mean = x.mean()
        w[w == 0.0] = mean
        h[h == 0.0] = mean
    elif variant == "nndsvdar":
        mean = x.mean()
        wz = w == 0.0
        hz = h == 0.0
        w[wz] = rng.uniform(0.0, mean / 100.0, size=int(wz.sum()))
        h[hz] = rng.uniform(0.0, mean / 100.0, size=int(hz.sum()))
    return w, h


def nnmf(dataset: MixtureDataset, k: int, init: str = "nndsvd", seed: int = 0,
         flip: bool = True, offset: bool = True,
         max_iter: int = 400, tol: float = 1e-9) -> ComponentSet:
    """Frobenius-loss NMF by cyclic coordinate descent on factor columns.

    Raw factors of the preprocessed matrix are reported; the row flips and
    the additive offset are recorded in ``meta`` for reconstruction
    accounting.  The objective is non-increasing across sweeps.
    """
    if init not in NNMF_INITS:
        raise ValueError(f"unknown nnmf init {init!r}")
    rng = seeded_rng(seed)
    x, flipped_rows, shift = nnmf_preprocess(dataset.spectra, flip, offset)
    m, n = x.shape

    if init == "random":
        scale = np.sqrt(max(x.mean(), np.finfo(float).tiny) / k)
        w = scale * np.abs(rng.standard_normal((m, k)))
        h = scale * np.abs(rng.standard_normal((k, n)))
    else:
        w, h = nndsvd_init(x, k, init, rng)

    eps = np.finfo(float).tiny
    norm_x = float(np.sum(x * x))
    history = [float(np.sum((x - w @ h) ** 2))]
    converged = False
    for _ in range(max_iter):
        # update H rows given W
        wtw = w.T @ w
        wtx = w.T @ x
        for j in range(k):
            denom = wtw[j, j]
            if denom <= eps:
                continue
            h[j] = np.maximum(h[j] + (wtx[j] - wtw[j] @ h) / denom, 0.0)
        # update W columns given H
        hht = h @ h.T
        xht = x @ h.T
        for j in range(k):
            denom = hht[j, j]
            if denom <= eps:
                continue
            w[:, j] = np.maximum(w[:, j] + (xht[:, j] - w @ hht[:, j]) / denom, 0.0)
        history.append(float(np.sum((x - w @ h) ** 2)))
        if history[-2] - history[-1] <= tol * max(norm_x, eps):
            converged = True
            break

    meta = {"init": init, "flipped_rows": flipped_rows.tolist(),
            "offset": shift, "objective_history": history}
    return ComponentSet(components=h, coefficients=w,
                        technique=TechniqueId("nnmf", init), k_requested=k,
                        converged=converged, meta=meta)


# ---------------------------------------------------------------------------
# SIMPLISMA
# ---------------------------------------------------------------------------

def simplisma(dataset: MixtureDataset, k: int, offset_percent: float) -> ComponentSet:
    """Pure-variable selection followed by least-squares spectrum resolution.

    Purity of variable j is std_j / (mean_j + alpha) with alpha a fraction
    of the largest mean; later selections are weighted by the determinant of
    the correlation-around-origin submatrix of the variables picked so far,
    which suppresses candidates correlated with previous picks.
    """
    d = dataset.spectra
    n_rows, n_cols = d.shape
    if not 1 <= k <= n_cols:
        raise ValueError(f"k must lie in [1, {n_cols}]")

    mean = d.mean(axis=0)
    std = d.std(axis=0)
    alpha = (offset_percent / 100.0) * float(mean.max())
    with np.errstate(divide="ignore", invalid="ignore"):
        purity = std / (mean + alpha)
    # constant variables carry no mixing information; a zero offset may
    # still push near-zero-mean noisy variables to huge (or infinite) purity
    purity[std == 0.0] = 0.0

    # correlation around the origin of length-scaled variables
    length_sq = std ** 2 + (mean + alpha) ** 2
    inv_length = np.zeros_like(length_sq)
    np.divide(1.0, np.sqrt(length_sq), out=inv_length, where=length_sq > 0.0)
    scaled = d * inv_length
    coo = scaled.T @ scaled / n_rows

    selected = [int(np.argmax(_sanitize(purity)))]
    for step in range(1, k):
        picked = np.array(selected)
        sub = np.empty((n_cols, step + 1, step + 1))
        sub[:, 0, 0] = np.diag(coo)
        sub[:, 0, 1:] = coo[:, picked]
        sub[:, 1:, 0] = coo[picked, :].T
        sub[:, 1:, 1:] = coo[np.ix_(picked, picked)][None, :, :]
        weights = np.maximum(np.linalg.det(sub), 0.0)
        ranking = _sanitize(purity * weights)
        ranking[picked] = -np.inf
        choice = int(np.argmax(ranking))
        if not np.isfinite(ranking[choice]) or ranking[choice] <= 0.0:
            # every determinant weight degenerated (the selected variables
            # already span the data); fall back to the next-best variable
            # by raw purity
            fallback = _sanitize(purity.copy())
            fallback[picked] = -np.inf
            choice = int(np.argmax(fallback))
            if fallback[choice] == -np.inf:
                raise TechniqueFailure(
                    "simplisma ran out of selectable pure variables "
                    f"after {step} of {k} selections")
        selected.append(choice)

    profiles = d[:, selected]                 # (n_spectra, k) concentrations
    comps, *_ = np.linalg.lstsq(profiles, d, rcond=None)
    meta = {"offset_percent": offset_percent, "pure_variables": selected}
    return ComponentSet(components=comps, coefficients=profiles,
                        technique=TechniqueId("simplisma", f"offset{offset_percent:g}"),
                        k_requested=k, converged=True, meta=meta)


def _sanitize(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    out[np.isnan(out)] = -np.inf
    return out


# ---------------------------------------------------------------------------
# multivariate curve resolution
# ---------------------------------------------------------------------------

def _regress(design: np.ndarray, target: np.ndarray, ridge: float = 1e-10):
    """Solve min ||design @ coef - target||_F, ridge fallback when singular."""
    gram = design.T @ design
    rhs = design.T @ target
    try:
        coef = np.linalg.solve(gram, rhs)
        if np.all(np.isfinite(coef)):
            return coef, False
    except np.linalg.LinAlgError:
        pass
    coef = np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), rhs)
    return coef, True


def mcr(dataset: MixtureDataset, k: int, regression: str = "ols_als",
        init: str = "provided", init_components=None, seed: int = 0,
        max_iter: int = 500, tol: float = 1e-8) -> ComponentSet:
    """Alternating regression between concentrations and spectra.

    ``ols_als`` uses unconstrained least squares in both directions;
    ``nnls`` constrains the concentration step to be nonnegative and first
    applies the same negative-intensity preprocessing as NMF.  The default
    "provided" initialization uses the magnitude-rectified leading right
    singular vectors.
    """
    if regression not in MCR_REGRESSIONS:
        raise ValueError(f"unknown mcr regression {regression!r}")
    if init not in MCR_INITS:
        raise ValueError(f"unknown mcr init {init!r}")

    meta = {"regression": regression, "init": init, "ridge_fallback": False}
    if regression == "nnls":
        x, flipped_rows, shift = nnmf_preprocess(dataset.spectra)
        meta["flipped_rows"] = flipped_rows.tolist()
        meta["offset"] = shift
    else:
        x = dataset.spectra

    rng = seeded_rng(seed)
    if init == "provided":
        if init_components is not None:
            spectra = np.array(init_components, dtype=float)
            if spectra.shape != (k, x.shape[1]):
                raise ValueError("init_components must have shape (k, n_points)")
        else:
            _, _, vt = svd(x)
            spectra = np.abs(vt[:k])
    else:
        spectra = rng.random((k, x.shape[1]))

    history = []
    converged = False
    conc = np.zeros((x.shape[0], k))
    norm_x = max(float(np.linalg.norm(x)), np.finfo(float).tiny)
    for _ in range(max_iter):
        if regression == "nnls":
            conc = np.stack([nnls(spectra.T, row) for row in x])
        else:
            coef, used_ridge = _regress(spectra.T, x.T)
            conc = coef.T
            meta["ridge_fallback"] |= used_ridge
        coef, used_ridge = _regress(conc, x)
        spectra = coef
        meta["ridge_fallback"] |= used_ridge
        residual = float(np.linalg.norm(x - conc @ spectra))
        history.append(residual)
        if len(history) > 1 and abs(history[-2] - residual) <= tol * norm_x:
            converged = True
            break

    meta["residual_history"] = history
    variant = regression if init == "provided" else f"{regression}:random"
    return ComponentSet(components=spectra, coefficients=conc,
                        technique=TechniqueId("mcr", variant), k_requested=k,
                        converged=converged, meta=meta)
