"""``haorcast`` command line entry point.

Exit codes: 0 success, 1 domain error (one-line diagnostic on stderr),
2 usage error. All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import alerts, damage, features, layers, raster, synthetic, trees, validation
from .errors import HaorcastError


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    fast: bool = False
    discharge: layers.DischargeThresholds = layers.DischargeThresholds()
    trend: layers.TrendConfig = layers.TrendConfig()
    bands: layers.TierBands = layers.TierBands()
    gate: float = alerts.DISPATCH_GATE
    threshold: float = layers.CLASSIFICATION_THRESHOLD

    def trainer(self) -> validation.Trainer:
        return validation.Trainer.fast() if self.fast else validation.Trainer()


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _read_series(path) -> np.ndarray:
    return np.array([float(t) for t in Path(path).read_text().split()], dtype=np.float64)


def _split_events(events, which: str):
    if which == "all":
        return events
    return [e for e in events if e.provenance == features.REAL_SAR]


# --- subcommands ------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig):
    proxy_cfg, _ = synthetic.load_config(args.config)
    events = synthetic.generate_bundled_dataset(cfg.seed, proxy_cfg)
    features.write_events(args.out, events)
    n_flood = sum(e.y for e in events)
    print(f"wrote {len(events)} events ({n_flood} flood, {len(events) - n_flood} dry) to {args.out}")


def cmd_map_flood(args, cfg: RunConfig):
    ref = raster.read_raster(args.reference)
    flood = raster.read_raster(args.flood)
    guard = None if args.no_guard else args.guard_db
    mask = raster.change_detect(ref, flood, guard_db=guard, bins=args.bins)
    raster.write_mask(args.out_mask, mask)
    diff = flood.values - ref.values
    otsu = raster.otsu_threshold(diff[np.isfinite(diff)], args.bins)
    summary = {
        "otsu_threshold_db": otsu.threshold,
        "between_class_variance": otsu.between_class_variance,
        "flooded_pixels": int(mask.flooded.sum()),
        "inundated_area_km2": raster.inundated_area_km2(mask),
        "guard_db": guard,
    }
    if args.validate_against:
        summary["correspondence"] = raster.correspondence_report(
            mask, raster.read_mask(args.validate_against))
    sys.stdout.write(_dump(summary))


def cmd_train(args, cfg: RunConfig):
    events = features.read_events(args.events)
    _, aug_cfg = synthetic.load_config(args.config)
    ss = np.random.SeedSequence(cfg.seed)
    aug_seq, model_seq = ss.spawn(2)
    rows = synthetic.augment_fold(events, aug_cfg, np.random.default_rng(aug_seq))
    t = cfg.trainer()
    model = t.fit(features.feature_matrix(rows), features.label_vector(rows),
                  int(model_seq.generate_state(1)[0]))
    trees.save_model(model, args.out)
    imp = trees.merged_importance(model)
    ranking = sorted(zip(features.FEATURE_NAMES, imp.tolist()), key=lambda kv: -kv[1])
    sys.stdout.write(_dump({"model": args.out, "trained_rows": len(rows),
                            "merged_importance": dict(ranking)}))


def cmd_predict(args, cfg: RunConfig):
    model = trees.load_model(args.model)
    events = features.read_events(args.event)
    series = _read_series(args.discharge_series) if args.discharge_series else None
    out = []
    p_base = trees.predict_proba(model, features.feature_matrix(events))
    for ev, pb in zip(events, p_base):
        bd, tr = layers.run_layers(float(pb), ev.dashboard.barak_discharge_m3s, series,
                                   cfg.discharge, cfg.trend, cfg.bands)
        rec = {"event_id": ev.event_id, **bd.as_dict()}
        if tr is not None:
            rec["trend"] = asdict(tr)
        out.append(rec)
    _emit(_dump(out if len(out) > 1 else out[0]), args.out)


def cmd_validate(args, cfg: RunConfig):
    events = features.read_events(args.events)
    evaluated = _split_events(events, args.eval)
    extra = []
    if args.train_with_proxies:
        extra = [e for e in events if e.provenance == features.PROXY and e not in evaluated]
    _, aug_cfg = synthetic.load_config(args.config)
    kw = dict(trainer=cfg.trainer(), augment_cfg=aug_cfg, layers_enabled=args.with_layers,
              extra_train=extra, discharge=cfg.discharge, threshold=cfg.threshold)
    if args.ablate:
        specs = validation.parse_ablation_file(Path(args.ablate).read_text())
        reports = validation.run_ablation(evaluated, specs, seed=cfg.seed,
                                          protocol=args.protocol, **kw)
        doc = {"ablation": validation.ablation_table(reports),
               "reports": {k: r.as_dict() for k, r in reports.items()}}
        text = _dump(doc)
    elif args.baselines:
        rows = validation.baseline_compare(evaluated, cfg.seed, kw["trainer"], aug_cfg,
                                           extra_train=extra, threshold=cfg.threshold)
        text = _dump({"baselines": rows})
    else:
        rep = validation.run_protocol(args.protocol, evaluated, seed=cfg.seed, **kw)
        text = rep.to_text()
    _emit(text, args.report)
    if args.report:
        print(f"report written to {args.report}")


def cmd_alert(args, cfg: RunConfig):
    doc = json.loads(Path(args.breakdown).read_text())
    records = doc if isinstance(doc, list) else [doc]
    roster = alerts.read_roster(args.roster) if args.roster else None
    templates = alerts.load_templates(args.templates)
    when = args.date or dt.date.today()
    if args.dry_run or not args.outbox:
        transports = {ch: alerts.MockTransport(ch) for ch in alerts.ALL_CHANNELS}
    else:
        transports = {ch: alerts.FileTransport(ch, Path(args.outbox)) for ch in alerts.ALL_CHANNELS}
    dispatcher = alerts.Dispatcher(transports)
    results = []
    for rec in records:
        bd = layers.combine(rec["p_base"], rec["delta_discharge"], rec["delta_trend"], cfg.bands)
        decision = alerts.decide(bd, cfg.gate)
        ctx = alerts.build_context(bd, when, args.area_name, args.crop_stage)
        messages = alerts.render_messages(decision, templates, ctx, when)
        entries = dispatcher.dispatch(rec.get("event_id", "event"), decision, messages, roster)
        results.append({"event_id": rec.get("event_id", "event"), "decision": asdict(decision),
                        "outbound_channels": list(decision.outbound_channels),
                        "messages": messages})
        lines = "".join(e.to_line() + "\n" for e in entries)
        if args.log:
            with open(args.log, "a", encoding="utf-8") as fh:
                fh.write(lines)
        else:
            sys.stdout.write(lines)
    if args.dry_run:
        sys.stderr.write(_dump(results))


def cmd_damage(args, cfg: RunConfig):
    mask = raster.read_mask(args.mask)
    acreage, _ = raster.read_grid(args.acreage)
    rows = damage.upazila_damage(mask, acreage, damage.read_calendar(args.calendar),
                                 damage.read_prices(args.prices), args.onset,
                                 args.duration_days, args.band_fraction, args.compound_steps)
    total = sum(r.loss_bdt for r in rows)
    sys.stdout.write(_dump({"upazilas": [asdict(r) for r in rows], "total_loss_bdt": total}))


def cmd_confound(args, cfg: RunConfig):
    clim = features.ClimatologyTable.from_file(args.climatology) if args.climatology else None
    events = _split_events(features.read_events(args.events, clim), args.eval)
    summary = features.confound_report(events)
    sys.stdout.write(_dump(summary.as_dict()))


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig()
    p = argparse.ArgumentParser(
        prog="haorcast",
        description="Haor flash-flood mapping, 72-hour flood probability, alerts and crop damage.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_,
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        sp.set_defaults(func=fn)
        return sp

    def seeded(sp):
        sp.add_argument("--seed", type=int, default=d.seed, help="master RNG seed")

    def profile(sp):
        sp.add_argument("--fast", action="store_true",
                        help=f"{trees.FAST_TREES} trees/stages instead of the published 500/500")
        sp.add_argument("--config", default=None,
                        help="proxy/augmentation config file (default: bundled synth.cfg; "
                             "augmentation sigma 0.05 in z-space, 8 copies per event)")

    sp = add("synth", cmd_synth, "generate the bundled 131-event synthetic dataset")
    seeded(sp)
    sp.add_argument("--out", required=True, help="output events CSV")
    sp.add_argument("--config", default=None, help="proxy config file (default: bundled)")

    sp = add("map-flood", cmd_map_flood, "Otsu change detection on a reference/at-flood VV pair")
    sp.add_argument("--reference", required=True, help="pre-flood VV grid")
    sp.add_argument("--flood", required=True, help="at-flood VV grid")
    sp.add_argument("--out-mask", required=True, help="output mask grid (1/0/NA)")
    sp.add_argument("--guard-db", type=float, default=raster.DEFAULT_GUARD_DB,
                    help="absolute VV guard: flooded pixels must be below this (midpoint of "
                         "the -18..-24 flooded and -9..-14 dry dB bands)")
    sp.add_argument("--no-guard", action="store_true", help="disable the absolute VV guard")
    sp.add_argument("--bins", type=int, default=raster.DEFAULT_BINS, help="Otsu histogram bins")
    sp.add_argument("--validate-against", default=None,
                    help="reference mask for spatial correspondence (overlap and IoU)")

    sp = add("train", cmd_train, "train the RF + GBT ensemble on an events CSV")
    seeded(sp)
    profile(sp)
    sp.add_argument("--events", required=True, help="events CSV")
    sp.add_argument("--out", required=True, help="output model file")

    sp = add("predict", cmd_predict, "three-layer prediction for one or more events")
    sp.add_argument("--model", required=True, help="model file from 'train'")
    sp.add_argument("--event", required=True, help="events CSV (one or more rows)")
    sp.add_argument("--discharge-series", default=None,
                    help="14 daily Barak discharge values (m3/s) for the trend layer")
    sp.add_argument("--out", default=None, help="write breakdown here instead of stdout")
    _threshold_flags(sp, d)

    sp = add("validate", cmd_validate, "cross-validate the ensemble")
    seeded(sp)
    profile(sp)
    sp.add_argument("--protocol", default="loocv", help="loocv | kfold:K | holdout")
    sp.add_argument("--events", required=True, help="events CSV")
    sp.add_argument("--eval", choices=("real", "all"), default="real",
                    help="evaluate real-SAR events only, or all events")
    sp.add_argument("--train-with-proxies", action="store_true",
                    help="add proxy events to every training split (never evaluated)")
    sp.add_argument("--with-layers", action="store_true",
                    help="add the discharge layer to p_base before classifying")
    sp.add_argument("--ablate", default=None, help="ablation spec file ('name: feat, feat')")
    sp.add_argument("--baselines", action="store_true",
                    help="compare logistic regression, RF, GBT and the ensemble")
    sp.add_argument("--report", default=None, help="report output path (default stdout)")
    _threshold_flags(sp, d)

    sp = add("alert", cmd_alert, "decide, render and dispatch alerts for a prediction breakdown")
    sp.add_argument("--breakdown", required=True, help="breakdown JSON from 'predict'")
    sp.add_argument("--roster", default=None, help="roster file ('channel: group, group')")
    sp.add_argument("--templates", default=None, help="template directory (default: bundled)")
    sp.add_argument("--dry-run", action="store_true", help="use in-memory mock transports")
    sp.add_argument("--log", default=None,
                    help="append the dispatch log (one JSON line per send) to this file")
    sp.add_argument("--outbox", default=None,
                    help="without --dry-run, write outgoing messages here as JSON lines")
    sp.add_argument("--date", type=_date, default=None, help="alert date (selects season)")
    sp.add_argument("--area-name", default="Sunamganj Haor", help="area named in messages")
    sp.add_argument("--crop-stage", default="grain_filling", help="crop stage named in messages")
    sp.add_argument("--gate", type=float, default=d.gate,
                    help="p_final needed for full three-channel dispatch")
    sp.add_argument("--tier-bands", type=float, nargs=3, default=None,
                    metavar=("MEDIUM", "HIGH", "EXTREME"),
                    help="tier lower bounds (default 0.40 0.65 0.85)")

    sp = add("damage", cmd_damage, "per-upazila boro rice loss estimate")
    sp.add_argument("--mask", required=True, help="flood mask grid")
    sp.add_argument("--acreage", required=True, help="upazila-id grid (0/NA = not cultivated)")
    sp.add_argument("--calendar", required=True, help="CSV upazila_id,transplant_date")
    sp.add_argument("--prices", required=True,
                    help="CSV upazila_id,yield_t_per_km2,price_bdt_per_t (id 0 = fallback)")
    sp.add_argument("--onset", type=_date, required=True, help="flood onset date")
    sp.add_argument("--duration-days", type=float, default=damage.RAMP_END_DAYS,
                    help="submergence duration in days")
    sp.add_argument("--band-fraction", type=float, default=damage.DEFAULT_BAND,
                    help="uncertainty band fraction (published range 0.25-0.40 per step)")
    sp.add_argument("--compound-steps", type=int, default=1,
                    help="apply the band this many times (3 compounds every chain step)")

    sp = add("confound", cmd_confound, "temperature/label confound analysis")
    sp.add_argument("--events", required=True, help="events CSV")
    sp.add_argument("--eval", choices=("real", "all"), default="all", help="events to analyse")
    sp.add_argument("--climatology", default=None,
                    help="month,temp_c file (default: bundled 2009-2024 monthly means)")
    return p


def _threshold_flags(sp, d: RunConfig):
    sp.add_argument("--high-m3s", type=float, default=d.discharge.high_m3s,
                    help="Barak HIGH discharge threshold, adds --high-delta")
    sp.add_argument("--danger-m3s", type=float, default=d.discharge.danger_m3s,
                    help="Barak DANGER discharge threshold, adds --danger-delta")
    sp.add_argument("--high-delta", type=float, default=d.discharge.high_delta,
                    help="probability added at HIGH discharge")
    sp.add_argument("--danger-delta", type=float, default=d.discharge.danger_delta,
                    help="probability added at DANGER discharge")
    sp.add_argument("--classification-threshold", type=float, default=d.threshold,
                    help="p_final at or above this is a flood (MEDIUM risk boundary)")
    sp.add_argument("--tier-bands", type=float, nargs=3, default=None,
                    metavar=("MEDIUM", "HIGH", "EXTREME"),
                    help="tier lower bounds (default 0.40 0.65 0.85)")


def _run_config(args) -> RunConfig:
    base = RunConfig()
    kw = {"seed": getattr(args, "seed", base.seed), "fast": getattr(args, "fast", False)}
    if hasattr(args, "high_m3s"):
        kw["discharge"] = layers.DischargeThresholds(args.high_m3s, args.danger_m3s,
                                                     args.high_delta, args.danger_delta)
        kw["threshold"] = args.classification_threshold
    if getattr(args, "tier_bands", None):
        kw["bands"] = layers.TierBands(*args.tier_bands)
    if hasattr(args, "gate"):
        kw["gate"] = args.gate
    return RunConfig(**kw)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    try:
        args.func(args, _run_config(args))
    except (HaorcastError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"haorcast {args.command}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
