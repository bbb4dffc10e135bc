"""Command-line interface.

Subcommands:

* ``run`` — one filter, one detection probability; writes per-step and
  summary CSVs (plus projection diagnostics for v-pmb) into an output
  directory.
* ``scenario`` — emit the ground-truth trajectory set for a seed as CSV.
* ``table1`` — all five filters at the benchmark detection probabilities;
  prints the summary table and optionally writes the full CSV set.

Flags may also come from a plain ``key = value`` config file (--config);
explicit command-line flags win. The worker count is taken from the
PMBTRACK_WORKERS environment variable only.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import TrackingError
from .experiment import (
    DEFAULT_TRUTH_SEED,
    FILTER_KINDS,
    TABLE1_DETECTION_PROBS,
    ExperimentConfig,
    per_step_csv,
    run_experiment,
    run_table1,
    summary_csv,
    table1_csv,
    timings_csv,
    vpmb_diagnostics_csv,
)
from .scenario import generate_scenario, serialize_scenario

_RUN_DEFAULTS = {
    "filter": "pmbm",
    "pd": 0.9,
    "runs": 100,
    "seed": 0,
    "max_hyp": 200,
    "truth_seed": DEFAULT_TRUTH_SEED,
    "out": "results",
}


def load_config(path: str) -> dict[str, str]:
    """Plain key-value config: one `key = value` per line, # comments."""
    values: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SystemExit(f"config line is not `key = value`: {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args, config: dict[str, str], key: str, cast):
    cli_value = getattr(args, key)
    if cli_value is not None:
        return cli_value
    if key in config:
        return cast(config[key])
    return _RUN_DEFAULTS[key]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmbtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one filter over the benchmark scenario")
    run_p.add_argument("--filter", choices=FILTER_KINDS, default=None)
    run_p.add_argument("--pd", type=float, default=None, help="detection probability")
    run_p.add_argument("--runs", type=int, default=None, help="Monte-Carlo run count")
    run_p.add_argument("--seed", type=int, default=None, help="base measurement seed")
    run_p.add_argument("--max-hyp", dest="max_hyp", type=int, default=None)
    run_p.add_argument("--truth-seed", dest="truth_seed", type=int, default=None)
    run_p.add_argument("--out", type=str, default=None, help="output directory")
    run_p.add_argument("--config", type=str, default=None, help="key = value config file")

    sc_p = sub.add_parser("scenario", help="emit the ground truth for a seed")
    sc_p.add_argument("--seed", type=int, default=DEFAULT_TRUTH_SEED)
    sc_p.add_argument("--out", type=str, required=True)

    t1_p = sub.add_parser("table1", help="all five filters at the benchmark detection probs")
    t1_p.add_argument("--runs", type=int, default=None)
    t1_p.add_argument("--seed", type=int, default=None)
    t1_p.add_argument("--truth-seed", dest="truth_seed", type=int, default=None)
    t1_p.add_argument("--out", type=str, default=None, help="optional output directory")
    t1_p.add_argument("--config", type=str, default=None)
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config) if args.config else {}
    cfg = ExperimentConfig(
        filter_kind=_resolve(args, config, "filter", str),
        p_detect=_resolve(args, config, "pd", float),
        n_runs=_resolve(args, config, "runs", int),
        rng_seed=_resolve(args, config, "seed", int),
        max_hyp=_resolve(args, config, "max_hyp", int),
        truth_seed=_resolve(args, config, "truth_seed", int),
    )
    out_dir = Path(_resolve(args, config, "out", str))
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_experiment(cfg)
    (out_dir / "results.csv").write_text(per_step_csv({cfg.filter_kind: result}))
    (out_dir / "summary.csv").write_text(summary_csv({cfg.filter_kind: result}))
    (out_dir / "timings.csv").write_text(
        timings_csv({(cfg.p_detect, cfg.filter_kind): result})
    )
    if cfg.filter_kind == "v-pmb":
        (out_dir / "vpmb_diagnostics.csv").write_text(vpmb_diagnostics_csv(result))
    print(
        f"{cfg.filter_kind}: RMS-GOSPA {result.summary_rms:.4f} over "
        f"{cfg.n_runs} runs (pd={cfg.p_detect}); wrote {out_dir}/"
    )
    return 0


def _cmd_scenario(args) -> int:
    truth = generate_scenario(args.seed)
    Path(args.out).write_text(serialize_scenario(truth))
    print(f"scenario seed {args.seed}: {len(truth.targets)} targets, "
          f"{truth.horizon} steps -> {args.out}")
    return 0


def _cmd_table1(args) -> int:
    config = load_config(args.config) if args.config else {}
    runs = _resolve(args, config, "runs", int)
    seed = _resolve(args, config, "seed", int)
    base = ExperimentConfig(
        filter_kind="pmbm", truth_seed=_resolve(args, config, "truth_seed", int)
    )
    results = run_table1(runs, seed, base_config=base)
    table = table1_csv(results)
    print(table, end="")
    if args.out is not None or "out" in config:
        out_dir = Path(args.out if args.out is not None else config["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "table1.csv").write_text(table)
        (out_dir / "timings.csv").write_text(timings_csv(results))
        for pd in TABLE1_DETECTION_PROBS:
            rows = {kind: results[(pd, kind)] for kind in FILTER_KINDS}
            (out_dir / f"results_pd{pd:g}.csv").write_text(per_step_csv(rows))
        print(f"wrote {out_dir}/")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "scenario":
            return _cmd_scenario(args)
        return _cmd_table1(args)
    except TrackingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
