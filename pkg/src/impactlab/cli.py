"""Command-line batch driver.

Every subcommand reads its settings from flags, optionally layered over a
flat ``key = value`` config file (``--config``), and writes artifacts into
``--out``.  Each artifact carries a hash of the settings and input bytes;
wall-clock details go to ``meta.json`` only, so reruns are byte-identical.
On failure a JSON error object is printed to stderr and the exit status is 1.

    impactlab synth --out flow/ --seed 7 --instruments 000001,000002
    impactlab stats --input flow/*.csv.gz --out out/
    impactlab calibrate --input flow/*.csv.gz --out out/ --model both
    impactlab report --input out/calibration_*.json --out out/
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from . import __version__
from .features import (
    InstrumentFeatures,
    ObservationSet,
    build_features,
    read_features,
    write_features,
)
from .lob import from_ticks
from .order_flow import ReplayCounters, read_events, replay, write_events
from .regression import (
    LOGARITHMIC,
    POWER_LAW,
    CalibrationResult,
    ModelSpec,
    aggregate_by_size,
    asymmetry_compare,
    default_grid,
    grid_calibrate,
    significance_pattern,
    taylor_linkage,
)
from .trades import TRADE_TYPES, TradeType, stock_stats, write_stats_csv

logger = logging.getLogger("impactlab")

MODEL_KINDS = {"pl": (POWER_LAW,), "ln": (LOGARITHMIC,), "both": (POWER_LAW, LOGARITHMIC)}
SHORT = {POWER_LAW: "pl", LOGARITHMIC: "ln"}
COMMANDS = ("replay", "stats", "extract", "calibrate", "pool", "compare", "synth", "report")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    input: list[str] = field(default_factory=list)
    instruments: list[str] = field(default_factory=list)
    levels: int = 5
    model: str = "pl"
    grid_step: float = 0.05
    out: str = "."
    norm: str = "rel"
    agg: bool = True
    weighted: bool = False
    alpha_level: float = 0.05
    seed: int = 0
    tick_size: float = 0.01
    # synth only
    generator: str = "flow"
    n_events: int = 60000
    n_obs: int = 10000
    true_alpha: float = 0.55
    true_beta: float = 0.10
    sigma: float = 0.05
    volume_dist: str = "lognormal"

    def validate(self) -> None:
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if not 0 < self.alpha_level < 1:
            raise ConfigError("alpha_level must lie in (0, 1)")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {sorted(MODEL_KINDS)}")
        if self.norm not in ("rel", "raw"):
            raise ConfigError("norm must be rel or raw")
        if not 0 < self.grid_step < 1:
            raise ConfigError("grid_step must lie in (0, 1)")

    def spec(self, kind: str) -> ModelSpec:
        g = default_grid(self.grid_step)
        return ModelSpec(kind=kind, levels=self.levels, alphas=g, betas=g, weighted=self.weighted)

    def digest(self, command: str) -> str:
        """Hash of the settings that shape the output plus the input bytes."""
        d = asdict(self)
        d.pop("out")
        d["command"] = command
        h = hashlib.sha256(json.dumps(d, sort_keys=True).encode())
        for p in self.input:
            h.update(hashlib.sha256(Path(p).read_bytes()).digest())
        return h.hexdigest()[:16]


def _coerce(name: str, value: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    if name not in kinds:
        raise ConfigError(f"unknown config key {name!r}")
    t = kinds[name]
    if t.startswith("list"):
        return [v.strip() for v in value.split(",") if v.strip()]
    if t == "bool":
        if value.lower() not in ("1", "0", "true", "false", "yes", "no"):
            raise ConfigError(f"{name}: not a boolean: {value!r}")
        return value.lower() in ("1", "true", "yes")
    try:
        return {"int": int, "float": float}.get(t, str)(value)
    except ValueError:
        raise ConfigError(f"{name}: bad value {value!r}") from None


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    # defaults are None so that a config file can fill in what flags leave out
    a("--config", help="flat key = value settings file; flags override it")
    a("--input", nargs="+", help="order-flow CSVs, feature CSVs or calibration JSONs")
    a("--instruments", help="comma-separated instrument codes to keep")
    a("--out", help="output directory")
    a("--levels", type=int, help="book levels L per side")
    a("--model", choices=sorted(MODEL_KINDS))
    a("--grid-step", type=float)
    a("--agg", action=argparse.BooleanOptionalAction, help="average trades of equal size before fitting")
    a("--weighted", action=argparse.BooleanOptionalAction, help="weight aggregated rows by trade count")
    a("--norm", choices=["rel", "raw"])
    a("--alpha-level", type=float, help="significance level for reports")
    a("--seed", type=int)
    a("--tick-size", type=float)
    a("--generator", choices=["flow", "model"], help="synth: order flow or model observations")
    a("--n-events", type=int)
    a("--n-obs", type=int)
    a("--true-alpha", type=float)
    a("--true-beta", type=float)
    a("--sigma", type=float)
    a("--volume-dist", choices=["lognormal", "uniform"])
    a("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="impactlab", description="immediate price impact toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "replay": "order flow -> trade records",
        "stats": "per-stock mean returns by trade type",
        "extract": "order flow -> normalized feature store",
        "calibrate": "grid calibration per instrument and trade type",
        "pool": "cross-sectional calibration over all instruments",
        "compare": "power-law vs logarithmic fits and their linkage",
        "synth": "synthetic order flow or model observations",
        "report": "significance, asymmetry and plot tables from calibrations",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    values = {}
    if ns.config:
        values.update(read_config(ns.config))
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is None:
            continue
        if f.name == "instruments":
            v = [s.strip() for s in v.split(",") if s.strip()]
        values[f.name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# artifact writing


class Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.hash = cfg.digest(command)
        self.stamp = f"config_hash={self.hash}"
        self.artifacts: list[str] = []

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def write_json(self, name: str, obj) -> None:
        obj = dict(obj)
        obj["config_hash"] = self.hash
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")

    def write_rows(self, name: str, header: list[str], rows, delimiter: str = ",") -> None:
        with open(self.path(name), "w", newline="") as fh:
            fh.write(f"# {self.stamp}\n")
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow(["" if x is None else (repr(float(x)) if isinstance(x, float) else x) for x in row])

    def write_result(self, name: str, res: CalibrationResult) -> None:
        res.meta = {"config_hash": self.hash}
        self.path(name).write_text(res.to_json())

    def write_meta(self, started: float, argv: list[str]) -> None:
        meta = {
            "command": self.command,
            "argv": argv,
            "config_hash": self.hash,
            "config": asdict(self.cfg),
            "version": __version__,
            "finished_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "elapsed_s": round(time.perf_counter() - started, 3),
            "artifacts": self.artifacts,
        }
        (self.out / f"meta_{self.command}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("IMPACTLAB_THREADS", "1")))
    except ValueError:
        return 1


def _safe(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", s) or "_"


# --------------------------------------------------------------------------
# loading


def _need_input(cfg: RunConfig) -> list[Path]:
    if not cfg.input:
        raise ConfigError("no --input given")
    paths = [Path(p) for p in cfg.input]
    for p in paths:
        if not p.exists():
            raise FileNotFoundError(f"input not found: {p}")
    return paths


def _split_by_instrument(paths: list[Path], cfg: RunConfig) -> dict[str, list]:
    """Read order-flow files and group events by instrument, keeping file order."""
    by_inst: dict[str, list] = {}
    for p in paths:
        for ev in read_events(p, cfg.tick_size):
            if cfg.instruments and ev.instrument not in cfg.instruments:
                continue
            by_inst.setdefault(ev.instrument, []).append(ev)
    if not by_inst:
        raise ValueError("no events for the requested instruments")
    return dict(sorted(by_inst.items()))


def _replay_all(paths, cfg: RunConfig):
    """Replay each instrument independently; instruments run in parallel."""
    by_inst = _split_by_instrument(paths, cfg)

    def one(item):
        inst, events = item
        c = ReplayCounters()
        trades = list(replay(events, cfg.levels, cfg.tick_size, counters=c))
        return inst, trades, c

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        return list(ex.map(one, by_inst.items()))


def _features_all(paths, cfg: RunConfig) -> list[tuple[InstrumentFeatures, ReplayCounters]]:
    return [
        (build_features(trades, cfg.levels, cfg.norm, instrument=inst), c)
        for inst, trades, c in _replay_all(paths, cfg)
    ]


_FEATURE_NAME = re.compile(r"^features_(.+)_(PB|PS|FB|FS)\.csv$")


def _is_feature_file(p: Path) -> bool:
    if p.suffix != ".csv":
        return False
    with open(p) as fh:
        for line in fh:
            if not line.startswith("#"):
                return line.startswith("r_norm,")
    return False


def _load_observations(paths, cfg: RunConfig) -> dict[tuple[str, str], ObservationSet]:
    """Normalized observations keyed by (instrument, type), from either
    order-flow files or feature-store CSVs (told apart by header)."""
    feats = [p for p in paths if _is_feature_file(p)]
    flows = [p for p in paths if p not in feats]
    out: dict[tuple[str, str], ObservationSet] = {}
    for p in feats:
        m = _FEATURE_NAME.match(p.name)
        inst, kind = (m.group(1), m.group(2)) if m else (p.stem, None)
        if cfg.instruments and inst not in cfg.instruments:
            continue
        obs = read_features(p, TradeType(kind) if kind else None, inst)
        if obs.levels < cfg.levels:
            raise ValueError(f"{p}: has {obs.levels} levels, need {cfg.levels}")
        out[(inst, kind or "ALL")] = obs.first_levels(cfg.levels)
    if flows:
        for f, _ in _features_all(flows, cfg):
            for t, obs in f.sets.items():
                out[(f.instrument, t.value)] = obs
    return dict(sorted(out.items()))


def _prepare(obs: ObservationSet, cfg: RunConfig) -> ObservationSet:
    return aggregate_by_size(obs) if cfg.agg else obs


def _fit(obs: ObservationSet, cfg: RunConfig, kind: str, trade_type, instrument) -> CalibrationResult:
    return grid_calibrate(obs, cfg.spec(kind), workers=_threads(), trade_type=trade_type, instrument=instrument)


# --------------------------------------------------------------------------
# subcommands


def cmd_replay(run: Run) -> dict:
    cfg = run.cfg
    header = [
        "timestamp", "instrument", "order_id", "type", "price", "size", "omega", "remainder",
        "levels_eaten", "a1_pre", "b1_pre", "a1_post", "b1_post", "r_exact", "r",
    ]
    summary = {}
    for inst, trades, c in _replay_all(_need_input(cfg), cfg):
        def rows():
            for t in trades:
                pre, post = t.pre, t.post
                rx = t.r_exact
                yield [
                    t.timestamp.isoformat(), t.instrument, t.order_id, t.type.value,
                    str(from_ticks(t.price, cfg.tick_size)), t.size, t.omega, t.remainder,
                    t.n_levels_eaten,
                    pre.best_ask if pre else None, pre.best_bid if pre else None,
                    post.best_ask if post else None, post.best_bid if post else None,
                    None if rx is None else str(rx), None if rx is None else float(rx),
                ]

        run.write_rows(f"trades_{_safe(inst)}.csv", header, rows())
        summary[inst] = c.as_dict()
    run.write_json("replay_counters.json", {"instruments": summary})
    return {"instruments": len(summary)}


def cmd_stats(run: Run) -> dict:
    cfg = run.cfg
    stats = [stock_stats(trades, inst) for inst, trades, _ in _replay_all(_need_input(cfg), cfg)]
    write_stats_csv(run.path("stats.csv"), stats, comment=run.stamp)
    detail = {}
    for s in stats:
        detail[s.instrument] = {
            "counts": {t.value: s.counts[t] for t in TRADE_TYPES},
            "mean_omega": {t.value: s.mean_omega[t] for t in TRADE_TYPES},
            "zero_fraction": {t.value: s.zero_fraction[t] for t in TRADE_TYPES},
            "partial_symmetry": s.partial_symmetry,
            "filled_symmetry": s.filled_symmetry,
            "n_undefined": s.n_undefined,
        }
    run.write_json("stats_detail.json", {"instruments": detail})
    return {"instruments": len(stats)}


def cmd_extract(run: Run) -> dict:
    cfg = run.cfg
    n = 0
    for f, c in _features_all(_need_input(cfg), cfg):
        inst = _safe(f.instrument)
        for t, obs in f.sets.items():
            write_features(run.path(f"features_{inst}_{t.value}.csv"), obs, comment=run.stamp)
            n += 1
        side = f.sidecar()
        side["replay_counters"] = c.as_dict()
        run.write_json(f"features_{inst}.json", side)
    return {"feature_files": n}


def cmd_calibrate(run: Run) -> dict:
    cfg = run.cfg
    data = _load_observations(_need_input(cfg), cfg)
    done, failed = 0, {}
    for (inst, t), obs in data.items():
        prepared = _prepare(obs, cfg)
        for kind in MODEL_KINDS[cfg.model]:
            name = f"calibration_{_safe(inst)}_{t}_{SHORT[kind]}.json"
            try:
                res = _fit(prepared, cfg, kind, t if t != "ALL" else None, inst)
            except (ValueError, ArithmeticError, RuntimeError) as exc:
                # one unusable instrument x type should not sink the batch
                failed[name] = f"{type(exc).__name__}: {exc}"
                continue
            run.write_result(name, res)
            done += 1
    run.write_json("calibrate_summary.json", {"fitted": done, "failed": failed})
    if not done:
        raise RuntimeError(f"no calibration succeeded: {failed}")
    return {"fitted": done, "failed": len(failed)}


def pooled_observations(data: dict[tuple[str, str], ObservationSet], agg: bool) -> dict[str, ObservationSet]:
    """Concatenate normalized observations across instruments, per trade type.
    Aggregation, if any, happens per instrument before pooling."""
    by_type: dict[str, list[ObservationSet]] = {}
    for (inst, t), obs in data.items():
        by_type.setdefault(t, []).append(aggregate_by_size(obs) if agg else obs)
    return {t: ObservationSet.concat(sets) for t, sets in sorted(by_type.items())}


def cmd_pool(run: Run) -> dict:
    cfg = run.cfg
    data = _load_observations(_need_input(cfg), cfg)
    pooled = pooled_observations(data, cfg.agg)
    n = 0
    for t, obs in pooled.items():
        for kind in MODEL_KINDS[cfg.model]:
            res = _fit(obs, cfg, kind, t if t != "ALL" else None, "POOLED")
            run.write_result(f"pooled_{t}_{SHORT[kind]}.json", res)
            n += 1
    counts = {t: {"rows": len(o), "instruments": sorted({str(i) for i in o.instrument})} for t, o in pooled.items()}
    run.write_json("pool_summary.json", {"types": counts})
    return {"fitted": n}


def cmd_compare(run: Run) -> dict:
    cfg = run.cfg
    data = _load_observations(_need_input(cfg), cfg)
    pls, lns, rows = [], [], []
    for (inst, t), obs in data.items():
        prepared = _prepare(obs, cfg)
        tt = t if t != "ALL" else None
        pl = _fit(prepared, cfg, POWER_LAW, tt, inst)
        ln = _fit(prepared, cfg, LOGARITHMIC, tt, inst)
        run.write_result(f"calibration_{_safe(inst)}_{t}_pl.json", pl)
        run.write_result(f"calibration_{_safe(inst)}_{t}_ln.json", ln)
        pls.append(pl)
        lns.append(ln)
        rows.append([inst, t, pl.alpha, pl.beta, pl.r2_adj, ln.alpha, ln.r2_adj])
    run.write_rows(
        "compare.csv",
        ["instrument", "type", "alpha_pl", "beta_pl", "r2_adj_pl", "alpha_ln", "r2_adj_ln"],
        rows,
    )
    link = taylor_linkage(pls, lns)
    run.write_rows(
        "linkage.tsv", ["x", "y", "label"],
        ([float(x), float(y), lab] for x, y, lab in zip(link.x, link.y, link.labels)),
        delimiter="\t",
    )
    run.write_json("linkage.json", {"slope": link.slope, "intercept": link.intercept, "n_points": len(link.x)})
    return {"slope": link.slope, "intercept": link.intercept}


def cmd_synth(run: Run) -> dict:
    from .synth import GeneratorConfig, TruthConfig, model_observations, zero_intelligence_flow

    cfg = run.cfg
    insts = cfg.instruments or ["000001"]
    records = {}
    if cfg.generator == "flow":
        for k, inst in enumerate(insts):
            g = GeneratorConfig(seed=cfg.seed + k, instrument=inst, n_events=cfg.n_events, tick_size=cfg.tick_size)
            events = zero_intelligence_flow(g)
            write_events(run.path(f"orderflow_{_safe(inst)}.csv.gz"), events, cfg.tick_size, comment=run.stamp)
            rec = asdict(g)
            rec["day"] = g.day.isoformat()
            records[inst] = rec
    else:
        kind = POWER_LAW if cfg.model != "ln" else LOGARITHMIC
        for k, inst in enumerate(insts):
            for j, t in enumerate(TRADE_TYPES):
                tc = TruthConfig(
                    seed=cfg.seed + 1000 * k + j, n=cfg.n_obs, kind=kind, levels=cfg.levels,
                    alpha=cfg.true_alpha, beta=cfg.true_beta, sigma=cfg.sigma,
                    volume_dist=cfg.volume_dist, trade_type=t.value, instrument=inst,
                )
                obs, truth = model_observations(tc)
                write_features(run.path(f"features_{_safe(inst)}_{t.value}.csv"), obs, comment=run.stamp)
                records[f"{inst}_{t.value}"] = truth
    run.write_json("truth.json", {"generator": cfg.generator, "records": records})
    return {"streams": len(records)}


def cmd_report(run: Run) -> dict:
    cfg = run.cfg
    results: dict[str, CalibrationResult] = {}
    for p in _need_input(cfg):
        res = CalibrationResult.from_json(p.read_text())
        results[p.stem.removeprefix("calibration_")] = res
    n = 0
    for kind in (POWER_LAW, LOGARITHMIC):
        group = {k: r for k, r in results.items() if r.kind == kind}
        for L in sorted({r.levels for r in group.values()}):
            sub = {k: r for k, r in group.items() if r.levels == L}
            sig = significance_pattern(sub, cfg.alpha_level)
            sig.to_csv(run.path(f"significance_{SHORT[kind]}_L{L}.csv"), comment=run.stamp)
            n += 1
            # one x,y series per coefficient: x indexes the fits, y the estimate
            run.write_rows(
                f"plot_coefficients_{SHORT[kind]}_L{L}.tsv",
                ["series", "x", "y", "significant"],
                (
                    [name, i, float(sig.estimate[i, j]), int(sig.significant[i, j])]
                    for j, name in enumerate(sig.names)
                    for i in range(len(sig.keys))
                    if sig.estimate[i, j] == sig.estimate[i, j]
                ),
                delimiter="\t",
            )
    for key, r in results.items():
        trace = r.trace_array()
        run.write_rows(
            f"plot_grid_{_safe(key)}.tsv", ["alpha", "beta", "r2_adj"],
            (
                [a, b, None if trace[i, j] != trace[i, j] else float(trace[i, j])]
                for i, a in enumerate(r.alphas)
                for j, b in enumerate(r.betas)
            ),
            delimiter="\t",
        )
    nested: dict[tuple[str, str], dict[str, CalibrationResult]] = {}
    for r in results.values():
        if r.trade_type:
            nested.setdefault((r.instrument or "", r.kind), {})[r.trade_type] = r
    rows = []
    for (inst, kind), by_type in sorted(nested.items()):
        for row in asymmetry_compare({inst: by_type}):
            rows.append([row["stock"], SHORT[kind], row["coefficient"]] + [row[t.value] for t in TRADE_TYPES]
                        + [int(row["absent"])])
    run.write_rows("asymmetry.csv", ["stock", "model", "coefficient", "PB", "PS", "FB", "FS", "absent"], rows)
    return {"results": len(results), "significance_tables": n}


HANDLERS = {
    "replay": cmd_replay,
    "stats": cmd_stats,
    "extract": cmd_extract,
    "calibrate": cmd_calibrate,
    "pool": cmd_pool,
    "compare": cmd_compare,
    "synth": cmd_synth,
    "report": cmd_report,
}


def run(command: str, cfg: RunConfig, argv: Optional[list[str]] = None) -> dict:
    """Run one subcommand in-process and return its summary."""
    started = time.perf_counter()
    r = Run(command, cfg)
    summary = HANDLERS[command](r)
    r.write_meta(started, list(argv or []))
    return summary


def main(argv: Optional[list[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(ns)
        summary = run(ns.command, cfg, argv)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        err = {"status": "error", "command": ns.command, "error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps({"status": "ok", "command": ns.command, **summary}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
