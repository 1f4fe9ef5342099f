"""Versioned JSON model files.

Layout::

    {"format": "srqda-model", "schema_version": 1, "tool_version": "...",
     "method": "qda" | "rqda" | "srqda" | "knn", "p": int, "priors": [pi0, pi1],
     "params": {...method-specific arrays...}, "summary": {...informational...}}

Arrays are nested lists of floats; JSON's shortest round-trip float repr keeps
them exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import KnnModel, QdaModel, RqdaModel, SrqdaModel
from .fisher import GammaParams, OmegaParams
from .model import EigenSummary

FORMAT = "srqda-model"
SCHEMA_VERSION = 1


class ModelFileError(ValueError):
    pass


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model) -> dict:
    if isinstance(model, QdaModel):
        method = "qda"
        params = {"means": _arr(model.means), "inverses": _arr(model.inverses),
                  "log_dets": list(model.log_dets), "ranks": list(model.ranks)}
    elif isinstance(model, RqdaModel):
        method = "rqda"
        params = {"means": _arr(model.means), "gamma": model.gamma, "eta_form": model.eta_form,
                  "eigenvalues": [_arr(e.values) for e in model.eigen],
                  "eigenvectors": [_arr(e.vectors) for e in model.eigen]}
    elif isinstance(model, SrqdaModel):
        method = "srqda"
        params = {"means": _arr(model.means), "vectors": [_arr(v) for v in model.vectors],
                  "sigma_sq": list(model.sigma_sq), "shrink": [_arr(s) for s in model.shrink],
                  "gamma_star": list(model.gamma_star.as_tuple()) if model.gamma_star else None,
                  "omega_star": list(model.omega_star.as_tuple()) if model.omega_star else None,
                  "objective": model.objective}
    elif isinstance(model, KnnModel):
        method = "knn"
        params = {"features": _arr(model.features), "labels": model.labels.tolist(), "k": model.k}
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return {"format": FORMAT, "schema_version": SCHEMA_VERSION, "tool_version": __version__,
            "method": method, "p": int(model.p), "priors": list(model.priors), "params": params,
            "summary": model_summary(model)}


def model_summary(model) -> dict:
    if isinstance(model, RqdaModel):
        return {"gamma": model.gamma}
    if isinstance(model, SrqdaModel):
        out = {"gamma_star": list(model.gamma_star.as_tuple()) if model.gamma_star else None,
               "diagnostics": list(model.diagnostics)}
        if model.estimates is not None:
            for i, e in enumerate(model.estimates):
                out[f"class{i}"] = {
                    "counts": [e.counts.upper, e.counts.lower],
                    "sigma_sq_raw": e.noise.raw, "sigma_sq_corrected": e.noise.corrected,
                    "lambda_hat": _arr(e.lambda_hat), "a_hat": _arr(e.a_hat), "b_hat": _arr(e.b_hat),
                    "alpha_inv_hat": e.alpha_inv_hat if np.isfinite(e.alpha_inv_hat) else None}
        return out
    if isinstance(model, KnnModel):
        return {"k": model.k}
    return {}


def model_from_dict(d: dict):
    if not isinstance(d, dict) or d.get("format") != FORMAT:
        raise ModelFileError("not a model file (missing format tag)")
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ModelFileError(f"unsupported schema_version {d.get('schema_version')!r}; "
                             f"expected {SCHEMA_VERSION}")
    try:
        method, pr, prm = d["method"], tuple(float(x) for x in d["priors"]), d["params"]
        if method == "qda":
            return QdaModel(np.array(prm["means"]), np.array(prm["inverses"]),
                            tuple(prm["log_dets"]), pr, tuple(prm["ranks"]))
        if method == "rqda":
            eig = tuple(EigenSummary(np.array(v), np.array(u))
                        for v, u in zip(prm["eigenvalues"], prm["eigenvectors"]))
            return RqdaModel(np.array(prm["means"]), eig, float(prm["gamma"]), pr, prm["eta_form"])
        if method == "srqda":
            p = int(d["p"])
            vecs = tuple(np.array(v, dtype=float).reshape(p, -1) for v in prm["vectors"])
            return SrqdaModel(np.array(prm["means"]), vecs, tuple(prm["sigma_sq"]),
                              tuple(np.array(s, dtype=float) for s in prm["shrink"]), pr,
                              GammaParams(*prm["gamma_star"]) if prm.get("gamma_star") else None,
                              OmegaParams(*prm["omega_star"]) if prm.get("omega_star") else None,
                              float(prm.get("objective", float("nan"))))
        if method == "knn":
            return KnnModel(np.array(prm["features"]), np.array(prm["labels"], dtype=np.int64),
                            int(prm["k"]), pr)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"corrupted model file: {exc}") from exc
    raise ModelFileError(f"unknown method {d.get('method')!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path):
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(d)
