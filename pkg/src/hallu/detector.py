"""HCDR hallucination detector over embedding vectors.

Pipeline: unit-normalize rows, PCA, per-dimension z-score; fit one
diagonal-covariance GMM per class on a training split; calibrate a per-class
log-density cutoff at a percentile of the calibration split. A sample is
inside the HCDR when at least one class's HDR claims it; the hallucination
rate is the fraction left outside.

The detector never computes embeddings itself; it consumes EMB1/CSV files
(see `embfile`), which keeps vision-model dependencies out of this package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import InputError, MissingArtifactError, ModelError
from .embfile import EmbeddingMatrix
from .rng import stream

DEFAULT_PERCENTILE = 10.0
DEFAULT_TRAIN_FRACTION = 0.8
DEFAULT_COMPONENTS = 5
DEFAULT_REG = 1e-6
DEFAULT_VARIANCE_FRACTION = 0.95
_EMPTY_RESP = 1e-10


# -- split ----------------------------------------------------------------------

def split(matrix: EmbeddingMatrix, train_fraction: float, seed: int
          ) -> tuple[EmbeddingMatrix, EmbeddingMatrix]:
    """Deterministic per-class stratified split into (train, calibration)."""
    if not 0.0 < train_fraction < 1.0:
        raise InputError("train_fraction must lie in (0, 1)")
    gen = stream(seed, "detector.split")
    train_idx, calib_idx = [], []
    for c in range(len(matrix.classes)):
        idx = np.flatnonzero(matrix.labels == c)
        if idx.size < 2:
            raise InputError(f"class {matrix.classes[c]!r} has {idx.size} samples; need >= 2")
        perm = idx[gen.permutation(idx.size)]
        n_train = int(round(train_fraction * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_idx.append(perm[:n_train])
        calib_idx.append(perm[n_train:])
    train_idx = np.concatenate(train_idx)
    calib_idx = np.concatenate(calib_idx)

    def take(ix):
        return EmbeddingMatrix(matrix.data[ix], matrix.labels[ix], matrix.classes,
                               source=matrix.source)

    return take(train_idx), take(calib_idx)


# -- preprocessing ----------------------------------------------------------------

@dataclass(frozen=True)
class PreprocessPipeline:
    """Row unit-normalization, PCA projection, then per-dimension z-scoring."""

    pca_mean: np.ndarray  # (D,)
    basis: np.ndarray  # (D, q), orthonormal columns
    eigenvalues: np.ndarray  # (q,), nonincreasing
    z_mean: np.ndarray  # (q,)
    z_std: np.ndarray  # (q,)

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]

    def transform(self, raw) -> np.ndarray:
        x = np.asarray(raw, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if not np.all(np.isfinite(x)):
            raise InputError("samples contain non-finite values")
        if x.shape[1] != self.pca_mean.shape[0]:
            raise InputError(f"samples have dimension {x.shape[1]}, pipeline expects "
                             f"{self.pca_mean.shape[0]}")
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise InputError("cannot unit-normalize a (near-)zero row")
        proj = (x / norms - self.pca_mean) @ self.basis
        out = (proj - self.z_mean) / self.z_std
        return out[0] if single else out

    def to_dict(self) -> dict:
        return {
            "pca_mean": self.pca_mean.tolist(),
            "basis": self.basis.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "z_mean": self.z_mean.tolist(),
            "z_std": self.z_std.tolist(),
        }

    @staticmethod
    def from_dict(doc: dict) -> "PreprocessPipeline":
        return PreprocessPipeline(*(np.asarray(doc[k], dtype=float) for k in
                                    ("pca_mean", "basis", "eigenvalues", "z_mean", "z_std")))


def fit_preprocess(train: np.ndarray, q: int | None = None,
                   variance_fraction: float | None = None) -> PreprocessPipeline:
    """PCA from the eigendecomposition of the covariance of unit-normalized rows.

    Pass either an explicit component count `q` or a `variance_fraction` in
    (0, 1) (the smallest q explaining at least that fraction); default is a
    0.95 variance fraction. Asking for more components than the data's rank
    is an error that names the achievable rank.
    """
    x = np.asarray(train, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InputError("need a 2-D matrix with at least two rows")
    if q is not None and variance_fraction is not None:
        raise InputError("pass q or variance_fraction, not both")
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise InputError("cannot unit-normalize a (near-)zero row")
    u = x / norms
    mean = u.mean(axis=0)
    centered = u - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    evals = np.maximum(evals, 0.0)
    rank = int(np.count_nonzero(evals > max(evals[0], 1e-300) * 1e-10))
    limit = min(x.shape[0] - 1, x.shape[1])
    if q is None:
        frac = DEFAULT_VARIANCE_FRACTION if variance_fraction is None else variance_fraction
        if not 0.0 < frac <= 1.0:
            raise InputError("variance_fraction must lie in (0, 1]")
        ratio = np.cumsum(evals[:rank]) / np.sum(evals[:rank])
        q = int(np.searchsorted(ratio, frac - 1e-12) + 1)
    if q < 1 or q > limit:
        raise InputError(f"q must lie in [1, {limit}]")
    if q > rank:
        raise InputError(f"requested {q} components but the data's achievable rank is {rank}")
    # deterministic eigenvector signs: largest-magnitude entry positive
    basis = evecs[:, :q].copy()
    flip = basis[np.argmax(np.abs(basis), axis=0), np.arange(q)] < 0
    basis[:, flip] *= -1.0
    proj = centered @ basis
    z_mean = proj.mean(axis=0)
    z_std = proj.std(axis=0, ddof=1)
    return PreprocessPipeline(mean, basis, evals[:q], z_mean, z_std)


# -- per-class density model -------------------------------------------------------

@dataclass(frozen=True)
class GmmModel:
    """Gaussian mixture fit by EM; diagonal covariances by default, full as an option.

    `variances` has shape (K, q) for covariance_type "diag" and (K, q, q)
    for "full".
    """

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, q)
    variances: np.ndarray
    log_likelihood_trace: np.ndarray  # mean log-likelihood per iteration
    converged: bool
    covariance_type: str = "diag"

    @property
    def n_components(self) -> int:
        return self.weights.size

    def _log_joint(self, x: np.ndarray) -> np.ndarray:
        # (n, K): log w_k + log N(x | mean_k, Sigma_k)
        if self.covariance_type == "diag":
            const = -0.5 * (np.log(2.0 * math.pi * self.variances).sum(axis=1))
            sq = ((x[:, None, :] - self.means[None, :, :]) ** 2 / self.variances[None, :, :])
            return np.log(self.weights)[None, :] + const[None, :] - 0.5 * sq.sum(axis=2)
        q = self.means.shape[1]
        cols = []
        for w, mean, cov in zip(self.weights, self.means, self.variances):
            chol = np.linalg.cholesky(cov)
            sol = np.linalg.solve(chol, (x - mean).T)
            logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
            cols.append(math.log(w) - 0.5 * (q * math.log(2.0 * math.pi) + logdet
                                             + np.sum(sol * sol, axis=0)))
        return np.column_stack(cols)

    def log_density(self, points) -> np.ndarray:
        """Numerically stable log density (log-sum-exp over components)."""
        x = np.asarray(points, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.means.shape[1]:
            raise InputError(f"points have dimension {x.shape[1]}, model expects "
                             f"{self.means.shape[1]}")
        out = logsumexp(self._log_joint(x), axis=1)
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_likelihood_trace": [float(v) for v in self.log_likelihood_trace],
            "converged": self.converged,
            "covariance_type": self.covariance_type,
        }

    @staticmethod
    def from_dict(doc: dict) -> "GmmModel":
        return GmmModel(
            np.asarray(doc["weights"], dtype=float),
            np.asarray(doc["means"], dtype=float),
            np.asarray(doc["variances"], dtype=float),
            np.asarray(doc["log_likelihood_trace"], dtype=float),
            bool(doc["converged"]),
            doc.get("covariance_type", "diag"),
        )


def _farthest_point_init(x: np.ndarray, k: int, gen) -> np.ndarray:
    centers = [x[int(gen.integers(x.shape[0]))]]
    for _ in range(1, k):
        d2 = np.min([np.sum((x - c) ** 2, axis=1) for c in centers], axis=0)
        centers.append(x[int(np.argmax(d2))])
    return np.stack(centers)


def fit_gmm(data: np.ndarray, n_components: int, max_iter: int = 200, tol: float = 1e-6,
            seed: int = 0, reg: float = DEFAULT_REG,
            covariance_type: str = "diag") -> GmmModel:
    """EM for a GMM with diagonal (default) or full covariances.

    Initialization is farthest-point seeding from the data (first center
    drawn with the run seed). The mean log-likelihood is nondecreasing
    across iterations; an emptied component is re-seeded once at the worst-
    explained point (restarting the recorded trace), a second emptying is a
    ModelError. Covariances are floored at `reg` (diagonal entries). Full
    covariances are limited to 16 projected dimensions for stability at
    small per-class sample counts.

    Parameters
    ----------
    data : (n, q) array, n >= n_components
    n_components, max_iter, tol : EM size and stopping rule (relative
        improvement of mean log-likelihood)
    seed, reg : run seed; covariance floor
    covariance_type : "diag" or "full"

    Returns
    -------
    GmmModel with the fitted parameters and the per-iteration trace.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise InputError("data must be 2-D")
    n, q = x.shape
    if n < n_components:
        raise InputError(f"need at least {n_components} samples, got {n}")
    if covariance_type not in ("diag", "full"):
        raise InputError("covariance_type must be 'diag' or 'full'")
    if covariance_type == "full" and q > 16:
        raise InputError("full covariances are supported for q <= 16 dimensions")
    full = covariance_type == "full"
    gen = stream(seed, "detector.gmm")
    means = _farthest_point_init(x, n_components, gen)
    data_var = np.maximum(x.var(axis=0), reg)
    fresh_cov = np.diag(data_var) if full else data_var
    variances = np.tile(fresh_cov, (n_components, 1, 1) if full else (n_components, 1))
    weights = np.full(n_components, 1.0 / n_components)
    model = GmmModel(weights, means, variances, np.empty(0), False, covariance_type)

    trace: list[float] = []
    reseeded = False
    converged = False
    x_sq = x**2
    for _ in range(max_iter):
        log_joint = model._log_joint(x)
        log_norm = logsumexp(log_joint, axis=1)
        ll = float(np.mean(log_norm))
        resp = np.exp(log_joint - log_norm[:, None])
        counts = resp.sum(axis=0)
        if np.any(counts < _EMPTY_RESP):
            if reseeded:
                raise ModelError("a GMM component emptied twice; reduce n_components")
            reseeded = True
            worst = int(np.argmin(log_norm))
            means = model.means.copy()
            variances = model.variances.copy()
            for j in np.flatnonzero(counts < _EMPTY_RESP):
                means[j] = x[worst]
                variances[j] = fresh_cov
            weights = np.full(n_components, 1.0 / n_components)
            model = GmmModel(weights, means, variances, np.empty(0), False, covariance_type)
            trace = []
            continue
        if trace and ll - trace[-1] < tol * abs(trace[-1]):
            trace.append(ll)
            converged = True
            break
        trace.append(ll)
        weights = counts / n
        means = (resp.T @ x) / counts[:, None]
        if full:
            variances = np.empty((n_components, q, q))
            for k in range(n_components):
                diff = x - means[k]
                variances[k] = (resp[:, k, None] * diff).T @ diff / counts[k]
                variances[k] += reg * np.eye(q)
        else:
            variances = np.maximum((resp.T @ x_sq) / counts[:, None] - means**2, reg)
        model = GmmModel(weights, means, variances, np.empty(0), False, covariance_type)
    return GmmModel(model.weights, model.means, model.variances, np.asarray(trace),
                    converged, covariance_type)


def log_density(model: GmmModel, point) -> float | np.ndarray:
    return model.log_density(point)


def calibrate(model: GmmModel, calibration_data: np.ndarray, percentile: float) -> float:
    """Percentile-ranked calibration log-density, lower-interpolation convention,
    so at least (1 - percentile/100) of the calibration points score >= cutoff."""
    vals = np.asarray(model.log_density(np.asarray(calibration_data, dtype=float)))
    if vals.size == 0:
        raise InputError("calibration data is empty")
    if not 0.0 <= percentile < 100.0:
        raise InputError("percentile must lie in [0, 100)")
    return float(np.percentile(vals, percentile, method="lower"))


# -- detection ----------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionReport:
    classes: tuple[str, ...]
    log_densities: np.ndarray  # (S, C)
    in_hdr: np.ndarray  # (S, C) bool
    in_hcdr: np.ndarray  # (S,) bool
    hallucination_rate: float

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "log_densities": self.log_densities.tolist(),
            "in_hdr": self.in_hdr.astype(int).tolist(),
            "in_hcdr": self.in_hcdr.astype(int).tolist(),
            "hallucination_rate": self.hallucination_rate,
        }


def detect(models: dict[str, GmmModel], thresholds: dict[str, float],
           pipeline: PreprocessPipeline, raw_samples) -> DetectionReport:
    """Flag each sample in/out of every class HDR and of their union (HCDR)."""
    classes = tuple(models)
    if set(thresholds) != set(classes):
        raise InputError("thresholds and models must cover the same classes")
    z = pipeline.transform(np.atleast_2d(np.asarray(raw_samples, dtype=float)))
    log_dens = np.column_stack([models[c].log_density(z) for c in classes])
    cuts = np.array([thresholds[c] for c in classes])
    in_hdr = log_dens >= cuts[None, :]
    in_hcdr = np.any(in_hdr, axis=1)
    rate = float(np.mean(~in_hcdr))
    return DetectionReport(classes, log_dens, in_hdr, in_hcdr, rate)


def hallucination_rate_trace(reports) -> list[tuple[int, float]]:
    """Collate (checkpoint, rate) rows, order preserved, no smoothing."""
    return [(i, r.hallucination_rate) for i, r in enumerate(reports)]


def save_rate_trace_csv(path, reports) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["checkpoint", "hallucination_rate"])
        for idx, rate in hallucination_rate_trace(reports):
            writer.writerow([idx, repr(float(rate))])


# -- fitted bundle -------------------------------------------------------------------

@dataclass(frozen=True)
class DetectorBundle:
    pipeline: PreprocessPipeline
    models: dict[str, GmmModel]
    thresholds: dict[str, float]
    manifest: dict


def fit_bundle(matrix: EmbeddingMatrix, *, seed: int,
               n_components: int = DEFAULT_COMPONENTS,
               q: int | None = None, variance_fraction: float | None = None,
               train_fraction: float = DEFAULT_TRAIN_FRACTION,
               percentile: float = DEFAULT_PERCENTILE,
               reg: float = DEFAULT_REG, max_iter: int = 200, tol: float = 1e-6,
               covariance_type: str = "diag",
               config_hash: str | None = None) -> DetectorBundle:
    """Full fit: split, preprocess, per-class GMM, percentile calibration."""
    train, calib = split(matrix, train_fraction, seed)
    pipeline = fit_preprocess(train.data, q=q, variance_fraction=variance_fraction)
    models: dict[str, GmmModel] = {}
    thresholds: dict[str, float] = {}
    for c, name in enumerate(matrix.classes):
        z_train = pipeline.transform(train.rows_of_class(c))
        gmm_seed = int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, c]).generate_state(1)[0])
        models[name] = fit_gmm(z_train, n_components, max_iter=max_iter, tol=tol,
                               seed=gmm_seed, reg=reg, covariance_type=covariance_type)
        z_calib = pipeline.transform(calib.rows_of_class(c))
        thresholds[name] = calibrate(models[name], z_calib, percentile)
    manifest = {
        "schema": "v1",
        "classes": list(matrix.classes),
        "seed": int(seed),
        "config": {
            "n_components": n_components, "q": q, "variance_fraction": variance_fraction,
            "train_fraction": train_fraction, "percentile": percentile, "reg": reg,
            "max_iter": max_iter, "tol": tol, "covariance_type": covariance_type,
        },
        "config_hash": config_hash,
        "source": matrix.source,
    }
    return DetectorBundle(pipeline, models, thresholds, manifest)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def save_bundle(directory, bundle: DetectorBundle) -> None:
    """pipeline.json, one model_<class>.json per class, thresholds.json, manifest.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _dump_json(d / "pipeline.json", bundle.pipeline.to_dict())
    for name, model in bundle.models.items():
        _dump_json(d / f"model_{name}.json", model.to_dict())
    _dump_json(d / "thresholds.json", bundle.thresholds)
    _dump_json(d / "manifest.json", bundle.manifest)


def load_bundle(directory) -> DetectorBundle:
    d = Path(directory)
    manifest_path = d / "manifest.json"
    missing = [p.name for p in (d / "pipeline.json", d / "thresholds.json", manifest_path)
               if not p.exists()]
    if missing:
        raise MissingArtifactError(f"bundle at {d} is missing {', '.join(missing)}")
    manifest = json.loads(manifest_path.read_text())
    pipeline = PreprocessPipeline.from_dict(json.loads((d / "pipeline.json").read_text()))
    thresholds = json.loads((d / "thresholds.json").read_text())
    models = {}
    for name in manifest["classes"]:
        path = d / f"model_{name}.json"
        if not path.exists():
            raise MissingArtifactError(f"bundle at {d} is missing {path.name}")
        models[name] = GmmModel.from_dict(json.loads(path.read_text()))
    return DetectorBundle(pipeline, models, {k: float(v) for k, v in thresholds.items()},
                          manifest)
