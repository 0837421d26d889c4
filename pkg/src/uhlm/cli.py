"""Command-line entry point: calibration runs, single runs, and sweeps.

Exit codes: 0 success, 2 config error, 3 backend error, 4 numerical or
validation failure. Set UHLM_LOG to adjust log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .backends.base import BackendPair
from .calibration import CalibrationModel, build_model, lattice_bin_edges
from .config import (
    BACKEND_KINDS,
    build_backend_pair,
    engine_config,
    load_config,
    resolved_hash,
)
from .engine import Method, RoundRecord, RunSummary, run_generation
from .errors import BackendError, ConfigError, UhlmError, ValidationError
from .uncertainty import PerturbationConfig

log = logging.getLogger("uhlm")

SUMMARY_COLUMNS = [
    "method", "seed", "snr_mean_db", "u_th", "tokens", "total_time_s",
    "throughput", "TR", "TSR", "mean_beta", "realized_risk", "fidelity_tv",
]

# Backend pairs are expensive to build (training, design solves); cache per
# process keyed by the backend section so sweep workers reuse them.
_PAIR_CACHE: dict[str, BackendPair] = {}


def _pair_for(doc: dict) -> BackendPair:
    key = json.dumps(doc.get("backend", {}), sort_keys=True)
    if key not in _PAIR_CACHE:
        _PAIR_CACHE[key] = build_backend_pair(doc)
    return _PAIR_CACHE[key]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _resolved_doc(doc: dict, **run_overrides) -> dict:
    resolved = {k: dict(v) if isinstance(v, dict) else v for k, v in doc.items()}
    run = dict(resolved.get("run", {}))
    for key, value in run_overrides.items():
        if value is not None:
            run[key] = value
    resolved["run"] = run
    return resolved


def _summary_row(
    method: Method, seed: int, snr_mean_db: float, u_th, summary: RunSummary
) -> dict:
    return {
        "method": method.value,
        "seed": seed,
        "snr_mean_db": snr_mean_db,
        "u_th": u_th if method is Method.UHLM else None,
        "tokens": summary.tokens_generated,
        "total_time_s": summary.total_time_s,
        "throughput": summary.throughput_tok_per_s,
        "TR": summary.tr,
        "TSR": summary.tsr,
        "mean_beta": summary.mean_beta,
        "realized_risk": summary.realized_risk,
        "fidelity_tv": summary.fidelity_tv,
    }


def _write_summary_csv(path: Path, rows: list[dict], config_hash: str, extra_cols=()) -> None:
    cols = SUMMARY_COLUMNS + list(extra_cols)
    with path.open("w", newline="") as fh:
        fh.write(f"# uhlm v{__version__} config_hash={config_hash}\n")
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in cols})


def _write_trace(
    path: Path,
    records: list[RoundRecord],
    resolved: dict,
    config_hash: str,
    aborted: str | None = None,
) -> None:
    with path.open("w") as fh:
        header = {"config": resolved, "config_hash": config_hash, "version": __version__}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")
        if aborted is not None:
            fh.write(json.dumps({"aborted": aborted}, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def collect_calibration_rounds(
    doc: dict, pair: BackendPair, seed: int, n_rounds: int
) -> list[RoundRecord]:
    """Run always-transmit generations (gate forced open, uncertainty still
    measured) until ``n_rounds`` verified rounds are collected, restarting
    with a derived seed whenever generation stops early."""
    collected: list[RoundRecord] = []
    segment = 0
    while len(collected) < n_rounds:
        cfg = engine_config(doc, Method.UHLM, seed=seed + 7919 * segment, u_th=-1.0, oracle=True)
        cfg = replace(cfg, r_max=max(1, min(n_rounds - len(collected), cfg.r_max)))
        records, _ = run_generation(cfg, pair)
        collected.extend(r for r in records if r.outcome is not None)
        segment += 1
        if segment > 20 * max(1, n_rounds):
            raise ValidationError("calibration could not collect enough verified rounds")
    return collected[:n_rounds]


def cmd_calibrate(args: argparse.Namespace) -> int:
    doc = _load_with_overrides(args)
    calib = doc.get("calibration", {})
    n_rounds = int(args.rounds or calib.get("rounds", 10_000))
    seed = int(args.seed if args.seed is not None else doc.get("run", {}).get("seed", 0))
    out = Path(args.out or calib.get("out", "calibration.json"))

    pair = _pair_for(doc)
    records = collect_calibration_rounds(doc, pair, seed, n_rounds)
    us = [r.u for r in records]
    betas = [r.outcome.beta for r in records]
    xy = [(r.x_draft, r.y_draft) for r in records]
    # Bins centered on the scores' K-lattice so the discrete values don't alias.
    k_perturb = PerturbationConfig(**doc.get("perturbation", {})).K
    model = build_model(us, betas, xy, bin_edges=lattice_bin_edges(k_perturb))
    out.parent.mkdir(parents=True, exist_ok=True)
    doc_out = model.to_dict()
    doc_out["config_hash"] = resolved_hash(_resolved_doc(doc, seed=seed, rounds=n_rounds))
    out.write_text(json.dumps(doc_out, indent=2) + "\n")
    print(f"calibration: a={model.a:.6f} b={model.b:.6f} delta={model.delta:.6f}")
    print(f"u_th risk-averse = {model.u_th_averse:.6f}")
    print(f"u_th risk-prone  = {model.u_th_prone:.6f}")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _resolve_u_th(doc: dict, args: argparse.Namespace, method: Method) -> float | None:
    if method is not Method.UHLM:
        return None
    if getattr(args, "u_th", None) is not None:
        return float(args.u_th)
    run = doc.get("run", {})
    if run.get("u_th") is not None:
        return float(run["u_th"])
    calib_path = getattr(args, "calibration", None) or run.get("calibration")
    if calib_path is None:
        raise ConfigError("calibration required: method uhlm needs --u-th or --calibration")
    model = CalibrationModel.load(calib_path)
    log.info("u_th %.6f taken from calibration %s (risk-prone)", model.u_th_prone, calib_path)
    return model.u_th_prone


def _matched_rand_skip_prob(doc: dict, pair: BackendPair, seed: int, u_th: float) -> float:
    """Skip probability matching the uncertainty-gated run's rate, for a
    like-for-like transmission-rate comparison."""
    cfg = engine_config(doc, Method.UHLM, seed=seed, u_th=u_th)
    _, summary = run_generation(cfg, pair)
    return 1.0 - summary.tr


def cmd_run(args: argparse.Namespace) -> int:
    doc = _load_with_overrides(args)
    run_section = doc.get("run", {})
    method = Method(args.method or run_section.get("method", "hlm"))
    if args.seed is not None:
        seeds = [int(args.seed)]
    else:
        seeds = [int(s) for s in run_section.get("seeds", [run_section.get("seed", 0)])]
    u_th = _resolve_u_th(doc, args, method)
    oracle = True if args.oracle else None

    out_dir = Path(args.out or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    pair = _pair_for(doc)

    rows = []
    for seed in seeds:
        rand_prob = run_section.get("rand_skip_prob")
        if method is Method.RAND_HLM and rand_prob is None:
            shadow_u_th = _resolve_u_th(doc, args, Method.UHLM)
            rand_prob = _matched_rand_skip_prob(doc, pair, seed, shadow_u_th)
            log.info("rand_skip_prob %.4f matched to uncertainty-gated skip rate", rand_prob)
        cfg = engine_config(
            doc, method, seed=seed, u_th=u_th, rand_skip_prob=rand_prob, oracle=oracle
        )
        resolved = _resolved_doc(
            doc, method=method.value, seed=seed, u_th=u_th,
            rand_skip_prob=rand_prob, oracle=cfg.oracle_mode,
        )
        config_hash = resolved_hash(resolved)
        trace_path = out_dir / f"trace_{method.value}_seed{seed}.ndjson"
        try:
            records, summary = run_generation(cfg, pair)
        except UhlmError as exc:
            partial = getattr(exc, "partial_records", None)
            if partial is not None:
                _write_trace(trace_path, partial, resolved, config_hash, aborted=str(exc))
                log.error("run aborted after %d rounds; partial trace at %s", len(partial), trace_path)
            raise
        _write_trace(trace_path, records, resolved, config_hash)
        rows.append(_summary_row(method, seed, cfg.channel.mean_snr_db(), u_th, summary))
        print(
            f"{method.value} seed={seed}: tokens={summary.tokens_generated} "
            f"throughput={summary.throughput_tok_per_s:.4f} tok/s TR={summary.tr:.4f}"
        )
    base_hash = resolved_hash(_resolved_doc(doc, method=method.value, u_th=u_th))
    _write_summary_csv(out_dir / "summary.csv", rows, base_hash)
    print(f"wrote {out_dir / 'summary.csv'}")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _sweep_cells(doc: dict, args: argparse.Namespace) -> list[dict]:
    sweep = doc.get("sweep")
    if not sweep:
        raise ConfigError("sweep requires a [sweep] section with at least one axis")
    run_section = doc.get("run", {})
    methods = sweep.get("methods", [run_section.get("method", "hlm")])
    seeds = sweep.get("seeds", run_section.get("seeds", [run_section.get("seed", 0)]))
    u_ths = sweep.get("u_th", [None])
    rhos = sweep.get("rho_m", [None])
    powers = sweep.get("p_dbm", [None])
    if not any(k in sweep for k in ("u_th", "rho_m", "p_dbm", "methods", "seeds")):
        raise ConfigError("sweep section defines no axes")

    cells = []
    index = 0
    for method_name in methods:
        method = Method(method_name)
        # The u_th axis only applies to the gated method; others run once.
        method_u_ths = u_ths if method is Method.UHLM else [None]
        for u_th in method_u_ths:
            for rho in rhos:
                for p in powers:
                    for seed in seeds:
                        overrides = {}
                        if rho is not None:
                            overrides["rho_m"] = rho
                        if p is not None:
                            overrides["p_dbm"] = p
                        cells.append(
                            {
                                "index": index,
                                "method": method.value,
                                "seed": int(seed),
                                "u_th": u_th,
                                "channel_overrides": overrides,
                            }
                        )
                        index += 1
    return cells


def _run_cell(doc: dict, cell: dict, default_u_th: float | None) -> dict:
    method = Method(cell["method"])
    u_th = cell["u_th"] if cell["u_th"] is not None else default_u_th
    pair = _pair_for(doc)
    rand_prob = doc.get("run", {}).get("rand_skip_prob")
    if method is Method.RAND_HLM and rand_prob is None:
        if u_th is None:
            raise ConfigError("rand-hlm needs rand_skip_prob or a u_th to match against")
        rand_prob = _matched_rand_skip_prob_with_overrides(
            doc, pair, cell["seed"], u_th, cell["channel_overrides"]
        )
    cfg = engine_config(
        doc, method, seed=cell["seed"],
        u_th=u_th if method is Method.UHLM else None,
        rand_skip_prob=rand_prob, channel_overrides=cell["channel_overrides"],
    )
    _, summary = run_generation(cfg, pair)
    row = _summary_row(method, cell["seed"], cfg.channel.mean_snr_db(), u_th, summary)
    row["status"] = "ok"
    row["index"] = cell["index"]
    return row


def _matched_rand_skip_prob_with_overrides(doc, pair, seed, u_th, overrides) -> float:
    cfg = engine_config(doc, Method.UHLM, seed=seed, u_th=u_th, channel_overrides=overrides)
    _, summary = run_generation(cfg, pair)
    return 1.0 - summary.tr


def _cell_worker(payload: tuple[dict, dict, float | None]) -> dict:
    doc, cell, default_u_th = payload
    try:
        return _run_cell(doc, cell, default_u_th)
    except UhlmError as exc:
        return {
            "index": cell["index"], "method": cell["method"], "seed": cell["seed"],
            "u_th": cell["u_th"], "status": f"error: {exc}",
        }


def cmd_sweep(args: argparse.Namespace) -> int:
    doc = _load_with_overrides(args)
    cells = _sweep_cells(doc, args)
    try:
        default_u_th = _resolve_u_th(doc, args, Method.UHLM)
    except ConfigError:
        default_u_th = None
    jobs = args.jobs or os.cpu_count() or 1
    out_dir = Path(args.out or "out")
    out_dir.mkdir(parents=True, exist_ok=True)

    payloads = [(doc, cell, default_u_th) for cell in cells]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_cell_worker, payloads))
    else:
        rows = [_cell_worker(p) for p in payloads]
    rows.sort(key=lambda r: r["index"])
    for row in rows:
        row.pop("index", None)

    config_hash = resolved_hash(_resolved_doc(doc))
    _write_summary_csv(out_dir / "sweep.csv", rows, config_hash, extra_cols=["status"])
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"sweep: {len(rows)} cells, {failed} failed -> {out_dir / 'sweep.csv'}")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _load_with_overrides(args: argparse.Namespace) -> dict:
    doc = load_config(args.config)
    if getattr(args, "backend", None):
        doc.setdefault("backend", {})["kind"] = args.backend
        log.info("override: backend.kind=%s", args.backend)
    if getattr(args, "rounds", None):
        doc.setdefault("run", {})["rounds"] = int(args.rounds)
        log.info("override: run.rounds=%s", args.rounds)
    ngram = doc.get("backend", {}).get("ngram")
    if ngram and "corpus_path" in ngram:
        corpus = Path(ngram["corpus_path"])
        if not corpus.is_absolute():
            ngram["corpus_path"] = str((Path(args.config).parent / corpus).resolve())
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uhlm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"uhlm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_rounds: bool = True) -> None:
        p.add_argument("--config", required=True, help="TOML or JSON run config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--backend", choices=BACKEND_KINDS, default=None)
        p.add_argument("--out", default=None, help="output directory/file")
        if with_rounds:
            p.add_argument("--rounds", type=int, default=None)

    p_cal = sub.add_parser("calibrate", help="fit the uncertainty-to-rejection map")
    common(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)

    p_run = sub.add_parser("run", help="run one generation per seed")
    common(p_run)
    p_run.add_argument("--method", choices=[m.value for m in Method], default=None)
    p_run.add_argument("--u-th", dest="u_th", type=float, default=None)
    p_run.add_argument("--calibration", default=None, help="calibration JSON path")
    p_run.add_argument("--oracle", action="store_true", help="enable counterfactual metrics")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="cross-product experiment sweep")
    common(p_sweep)
    p_sweep.add_argument("--u-th", dest="u_th", type=float, default=None)
    p_sweep.add_argument("--calibration", default=None)
    p_sweep.add_argument("--jobs", type=int, default=None)
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("UHLM_LOG", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except UhlmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
