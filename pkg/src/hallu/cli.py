"""Command-line front end: JSON configs in, JSON/CSV reports out.

Exit codes are a stable contract: 0 success, 2 config/validation problems,
3 infeasible constructions or failed verification, 4 missing artifacts.
Every command requires a seed (flag > HALLU_SEED env > config file); reports
regenerate byte-identically from (config, seed) except for timing fields.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import coinflip as coin_mod
from . import detector as det_mod
from . import embfile
from . import regions as regions_mod
from .constructions import (
    ConstructionReport,
    TiltedFamily,
    cross_entropy_witness,
    exact_optimum_witness,
    near_optimal_witness,
    tilted_witness,
)
from .errors import InfeasibleError, InputError, MissingArtifactError, ModelError
from .mixtures import mixture_from_dict, mixture_to_dict

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_MISSING = 4

SCHEMA = "v1"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict, seed: int, workers: int) -> str:
    payload = canonical_json({"config": config, "seed": seed, "workers": workers})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _write_json(path: Path, obj) -> None:
    if isinstance(obj, dict):
        obj.setdefault("schema", SCHEMA)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


class _Run:
    """Resolved config + seed + output directory for one command invocation."""

    def __init__(self, args):
        self.config_path = args.config
        try:
            self.config = json.loads(Path(args.config).read_text())
        except FileNotFoundError as exc:
            raise MissingArtifactError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(self.config, dict):
            raise InputError("config must be a JSON object")
        seed = args.seed
        if seed is None and "HALLU_SEED" in os.environ:
            try:
                seed = int(os.environ["HALLU_SEED"])
            except ValueError as exc:
                raise InputError("HALLU_SEED must be an integer") from exc
        if seed is None:
            seed = self.config.get("seed")
        if seed is None:
            raise InputError("no seed: pass --seed, set HALLU_SEED, or put \"seed\" in the config")
        self.seed = int(seed)
        if not 0 <= self.seed < 2**64:
            raise InputError("seed must fit in an unsigned 64-bit integer")
        self.workers = int(args.workers if args.workers is not None
                           else self.config.get("workers", 1))
        if self.workers < 1:
            raise InputError("workers must be >= 1")
        out = args.out if args.out is not None else self.config.get("out", "hallu-out")
        self.outdir = Path(out)
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.hash = config_hash(self.config, self.seed, self.workers)
        self._t0 = time.perf_counter()

    def write_report(self, command: str, result: dict, exit_code: int) -> None:
        doc = {
            "schema": SCHEMA,
            "command": command,
            "config_hash": self.hash,
            "seed": self.seed,
            "workers": self.workers,
            "exit_code": exit_code,
            "result": result,
            "timing": {"seconds": time.perf_counter() - self._t0},
        }
        _write_json(self.outdir / "report.json", doc)


def _construction_to_dict(report: ConstructionReport) -> dict:
    if hasattr(report.mixture, "components"):
        dist = {"kind": "mixture", **mixture_to_dict(report.mixture)}
    else:
        setup = report.mixture
        dist = {
            "kind": "categorical",
            "targets": setup.targets.tolist(),
            "weights": setup.weights.tolist(),
            "variance": setup.variance,
            "variance_bound": setup.variance_bound,
            "capped": setup.capped,
        }
    return {
        "distribution": dist,
        "delta": report.delta,
        "estimator_value": np.asarray(report.estimator_value).tolist(),
        "per_state_density": np.asarray(report.per_state_density).tolist(),
        "passed": report.passed,
        "details": report.details,
    }


def _covariances_from_spec(spec: dict, n: int):
    covs = spec.get("covariances")
    if covs is None:
        return None
    out = []
    for cov in covs:
        if isinstance(cov, dict):
            out.append(cov)
        else:
            out.append(np.asarray(cov, dtype=float))
    return out


def _run_construction_spec(spec: dict, run: _Run) -> list[dict]:
    theorem = spec.get("theorem")
    delta = spec.get("delta")
    if theorem not in ("5.1", "5.2", "5.4", "D"):
        raise InputError(f"unknown construction kind {theorem!r}")
    if delta is None:
        raise InputError("construction spec needs a delta")
    if theorem == "5.1":
        n = int(spec.get("n_states", len(spec.get("weights", [])) or 2))
        rep = exact_optimum_witness(
            n, int(spec.get("dim", 1)), float(delta), spec.get("weights"),
            _covariances_from_spec(spec, n),
        )
        return [_construction_to_dict(rep)]
    if theorem == "5.2":
        n = int(spec.get("n_states", len(spec.get("weights", [])) or 2))
        rep = near_optimal_witness(
            n, int(spec.get("dim", 1)), float(delta), float(spec.get("epsilon", 0.0)),
            spec.get("weights"), float(spec.get("scale", 1.0)),
            int(spec.get("ball_samples", 1000)), rng=run.seed,
        )
        return [_construction_to_dict(rep)]
    if theorem == "5.4":
        family = TiltedFamily(spec.get("base_input", [0.0]), spec["hints"],
                              float(spec["lipschitz"]))
        tilted = tilted_witness(
            family, float(delta), n_states=int(spec.get("n_states", 2)),
            dim=int(spec.get("dim", 1)), weights=spec.get("weights"),
            scale=float(spec.get("scale", 1.0)),
            ball_samples=int(spec.get("ball_samples", 1000)), rng=run.seed,
        )
        out = []
        for t in tilted:
            out.append({
                "hint_index": t.hint_index,
                "applicable": t.applicable,
                "lipschitz_gap": t.lipschitz_gap,
                **(_construction_to_dict(t.report) if t.report else {"passed": False}),
            })
        return out
    rep = cross_entropy_witness(int(spec["n_states"]), int(spec["n_classes"]), float(delta))
    return [_construction_to_dict(rep)]


def cmd_construct(run: _Run) -> int:
    specs = run.config.get("constructions")
    if specs is None:
        specs = [run.config]
    if not isinstance(specs, list) or not specs:
        raise InputError("config must carry a construction spec or a list under 'constructions'")
    all_reports, any_infeasible = [], False
    for idx, spec in enumerate(specs):
        try:
            reports = _run_construction_spec(spec, run)
        except InfeasibleError as exc:
            any_infeasible = True
            reports = [{"passed": False, "infeasible": True, "error": str(exc)}]
        for rep in reports:
            rep["spec_index"] = idx
        _write_json(run.outdir / f"construction_{idx}.json", {"constructions": reports})
        all_reports.extend(reports)
    all_pass = all(r.get("passed") for r in all_reports)
    code = EXIT_OK if all_pass else EXIT_INFEASIBLE
    run.write_report("construct", {"constructions": all_reports, "all_passed": all_pass,
                                   "infeasible": any_infeasible}, code)
    return code


def _parse_verify_tokens(tokens) -> dict:
    opts = {}
    for tok in tokens or []:
        if "=" not in tok:
            raise InputError(f"--verify expects key=value tokens, got {tok!r}")
        key, val = tok.split("=", 1)
        opts[key] = val
    return opts


def cmd_bound(run: _Run, verify_tokens, d_variant_flag) -> int:
    doc = dict(run.config.get("bound", run.config))
    if d_variant_flag:
        doc["d_variant"] = d_variant_flag
    inputs = bounds_mod.BoundInputs.from_dict(doc)
    report = bounds_mod.hallucination_lower_bound(inputs)

    verify_opts = _parse_verify_tokens(verify_tokens)
    mc_cfg = dict(run.config.get("mc", {}))
    mc_cfg.update(verify_opts)
    code = EXIT_OK if report.feasible else EXIT_INFEASIBLE
    verification = None

    if verify_opts or run.config.get("mc", {}).get("trials"):
        if not report.feasible:
            verification = {"skipped": "bound infeasible"}
        else:
            try:
                trials = int(mc_cfg["trials"])
                sigma = float(mc_cfg["sigma"])
                mc_delta = float(mc_cfg["delta"])
            except KeyError as exc:
                raise InputError(f"MC verification needs {exc} (config 'mc' or --verify)") from exc
            mc = bounds_mod.mc_verify_bound(inputs, sigma**2, mc_delta, trials,
                                            run.seed, run.workers)
            report = dataclasses.replace(report, empirical=mc)
            ok = mc.hallucination_wilson[0] >= report.product_bound
            verification = {**mc.to_dict(), "frequency_exceeds_bound": ok}
            if not ok:
                code = EXIT_INFEASIBLE
    result = {"inputs": inputs.to_dict(), "bound": report.to_dict()}
    if verification is not None:
        result["verification"] = verification
    if run.config.get("lemma_trials"):
        checks = bounds_mod.verify_inequalities(inputs, int(run.config["lemma_trials"]),
                                                run.seed)
        result["inequality_checks"] = [c.to_dict() for c in checks]
        if not all(c.ok for c in checks):
            code = EXIT_INFEASIBLE
    run.write_report("bound", result, code)
    return code


def cmd_coinflip(run: _Run) -> int:
    cfg = run.config
    if "demo" in cfg:
        demo = cfg["demo"] or {}
        task = coin_mod.mirrored_demo_task(
            n_per_state=int(demo.get("n_per_state", 20)),
            p=float(demo.get("p", 0.05)),
            state_probs=tuple(demo.get("state_probs", (0.5, 0.5))),
        )
    else:
        coins = coin_mod.CoinSet(cfg["coins"])
        states = [(s["subset"], s["prob"]) for s in cfg["states"]]
        task = coin_mod.LatentCoinTask(coins, states, bool(cfg.get("shared_input", False)))
    flips = int(cfg.get("flips", 20000))
    dataset = coin_mod.generate_dataset(task, flips, run.seed, partitions=run.workers)
    if cfg.get("save_dataset"):
        coin_mod.save_dataset_csv(run.outdir / "dataset.csv", dataset)
    model, trace = coin_mod.train_estimator(
        dataset, task, int(cfg.get("epochs", 60)), float(cfg.get("learning_rate", 0.01)),
        run.seed, batch_size=cfg.get("batch_size"),
        val_fraction=float(cfg.get("val_fraction", 0.2)),
    )
    coin_mod.save_trace_csv(run.outdir / "trace.csv", trace)
    verdict = coin_mod.hallucination_demo(task, float(cfg.get("delta", 0.01)))
    verdict_doc = {
        "prediction": verdict.prediction,
        "rounded": verdict.rounded,
        "per_state_pmf": verdict.per_state_pmf.tolist(),
        "hallucinates": verdict.hallucinates,
        "delta": verdict.delta,
    }
    _write_json(run.outdir / "verdict.json", verdict_doc)
    result = {
        "verdict": verdict_doc,
        "rows": dataset.n_rows,
        "final_loss": float(trace.train_loss[-1]),
        "initial_loss": float(trace.train_loss[0]),
        "final_mean_conditional_pmf": float(trace.mean_conditional_pmf[-1]),
        "model_weights": model.weights.tolist(),
    }
    run.write_report("coinflip", result, EXIT_OK)
    return EXIT_OK


def _load_matrix(cfg: dict) -> embfile.EmbeddingMatrix:
    emb = cfg.get("embeddings")
    if emb is None:
        raise InputError("config needs an 'embeddings' path")
    if not Path(emb).exists():
        raise MissingArtifactError(f"embeddings file not found: {emb}")
    if str(emb).endswith(".csv"):
        return embfile.load_embedding_csv(emb)
    manifest = cfg.get("manifest")
    if manifest is None:
        raise InputError("EMB1 ingestion needs a 'manifest' path")
    if not Path(manifest).exists():
        raise MissingArtifactError(f"manifest file not found: {manifest}")
    return embfile.load_embedding_matrix(emb, manifest)


def cmd_detector(run: _Run, action: str) -> int:
    cfg = run.config
    if action == "fit":
        matrix = _load_matrix(cfg)
        bundle = det_mod.fit_bundle(
            matrix, seed=run.seed,
            n_components=int(cfg.get("n_components", det_mod.DEFAULT_COMPONENTS)),
            q=cfg.get("q"), variance_fraction=cfg.get("variance_fraction"),
            covariance_type=cfg.get("covariance_type", "diag"),
            train_fraction=float(cfg.get("train_fraction", det_mod.DEFAULT_TRAIN_FRACTION)),
            percentile=float(cfg.get("percentile", det_mod.DEFAULT_PERCENTILE)),
            reg=float(cfg.get("reg", det_mod.DEFAULT_REG)),
            max_iter=int(cfg.get("max_iter", 200)), tol=float(cfg.get("tol", 1e-6)),
            config_hash=run.hash,
        )
        det_mod.save_bundle(run.outdir / "bundle", bundle)
        result = {
            "bundle": str(run.outdir / "bundle"),
            "classes": list(matrix.classes),
            "thresholds": bundle.thresholds,
            "em_iterations": {c: int(m.log_likelihood_trace.size)
                              for c, m in bundle.models.items()},
        }
        run.write_report("detector-fit", result, EXIT_OK)
        return EXIT_OK

    if action == "report":
        paths = cfg.get("detections")
        if not paths:
            raise InputError("config needs a 'detections' list")
        rates = []
        for p in paths:
            if not Path(p).exists():
                raise MissingArtifactError(f"detection report not found: {p}")
            doc = json.loads(Path(p).read_text())
            rates.append(float(doc["hallucination_rate"]))
        trace_path = run.outdir / "rate_trace.csv"
        with open(trace_path, "w", newline="") as fh:
            fh.write("checkpoint,hallucination_rate\n")
            for i, r in enumerate(rates):
                fh.write(f"{i},{r!r}\n")
        run.write_report("detector-report", {"rates": rates,
                                             "trace": str(trace_path)}, EXIT_OK)
        return EXIT_OK

    bundle_dir = cfg.get("bundle")
    if bundle_dir is None:
        raise InputError("config needs a 'bundle' path")
    bundle = det_mod.load_bundle(bundle_dir)

    if action == "calibrate":
        matrix = _load_matrix(cfg)
        percentile = float(cfg.get("percentile", det_mod.DEFAULT_PERCENTILE))
        thresholds = {}
        for c, name in enumerate(matrix.classes):
            if name not in bundle.models:
                raise InputError(f"bundle has no model for class {name!r}")
            z = bundle.pipeline.transform(matrix.rows_of_class(c))
            thresholds[name] = det_mod.calibrate(bundle.models[name], z, percentile)
        merged = dict(bundle.thresholds)
        merged.update(thresholds)
        det_mod.save_bundle(bundle_dir, det_mod.DetectorBundle(
            bundle.pipeline, bundle.models, merged, bundle.manifest))
        run.write_report("detector-calibrate", {"thresholds": merged,
                                                "percentile": percentile}, EXIT_OK)
        return EXIT_OK

    if action == "detect":
        emb = cfg.get("embeddings")
        if emb is None:
            raise InputError("config needs an 'embeddings' path")
        if not Path(emb).exists():
            raise MissingArtifactError(f"embeddings file not found: {emb}")
        if str(emb).endswith(".csv"):
            rows = embfile.load_embedding_csv(emb).data
        else:
            rows = embfile.read_emb1(emb)
        report = det_mod.detect(bundle.models, bundle.thresholds, bundle.pipeline, rows)
        _write_json(run.outdir / "detection.json", report.to_dict())
        run.write_report("detector-detect",
                         {"hallucination_rate": report.hallucination_rate,
                          "samples": int(report.in_hcdr.size),
                          "detection": str(run.outdir / "detection.json")}, EXIT_OK)
        return EXIT_OK
    raise InputError(f"unknown detector action {action!r}")


def cmd_hdr(run: _Run) -> int:
    cfg = run.config
    mixture = mixture_from_dict(cfg["mixture"])
    hdr_mass = float(cfg.get("hdr_mass", 0.9))
    kwargs = {}
    if "hcdr_delta" in cfg:
        kwargs["hcdr_delta"] = float(cfg["hcdr_delta"])
    else:
        kwargs["hcdr_mass"] = float(cfg.get("hcdr_mass", hdr_mass))
    axes, hdr_mask, hcdr_mask, info = regions_mod.hdr_hcdr_masks(
        mixture, hdr_mass=hdr_mass, cells=cfg.get("cells"),
        span=float(cfg.get("span", regions_mod.GRID_SPAN_SIGMAS)), **kwargs,
    )
    grid_path = run.outdir / "grid.csv"
    regions_mod.export_grid_csv(grid_path, axes, {"hdr": hdr_mask, "hcdr": hcdr_mask})
    result = {
        "grid": str(grid_path),
        "hdr_threshold": info["hdr_threshold"],
        "hdr_achieved": info["hdr_achieved"],
        "per_state": info["per_state"],
        "hdr_intervals": regions_mod.count_runs(hdr_mask) if len(axes) == 1 else None,
        "hcdr_intervals": regions_mod.count_runs(hcdr_mask) if len(axes) == 1 else None,
    }
    run.write_report("hdr-plot-data", result, EXIT_OK)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hallu", description=__doc__)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (u64)")
        p.add_argument("--workers", type=int, default=None, help="partition count")
        p.add_argument("--out", default=None, help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)
    add_common(sub.add_parser("construct", help="build and verify hallucination witnesses"))
    p_bound = sub.add_parser("bound", help="evaluate the hallucination probability lower bound")
    add_common(p_bound)
    p_bound.add_argument("--verify", nargs="*", metavar="KEY=VALUE",
                         help="run MC verification, e.g. --verify trials=100000")
    p_bound.add_argument("--d-variant", choices=("statement", "proof"), default=None)
    add_common(sub.add_parser("coinflip", help="coin-flip experiment and demo verdict"))
    p_det = sub.add_parser("detector", help="HCDR detector over embedding files")
    p_det.add_argument("action", choices=("fit", "calibrate", "detect", "report"))
    add_common(p_det)
    p_hdr = sub.add_parser("hdr", help="HDR/HCDR plot data")
    p_hdr.add_argument("action", choices=("plot-data",))
    add_common(p_hdr)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = _Run(args)
        if args.command == "construct":
            return cmd_construct(run)
        if args.command == "bound":
            return cmd_bound(run, args.verify, args.d_variant)
        if args.command == "coinflip":
            return cmd_coinflip(run)
        if args.command == "detector":
            return cmd_detector(run, args.action)
        if args.command == "hdr":
            return cmd_hdr(run)
        raise InputError(f"unknown command {args.command!r}")
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, ModelError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
