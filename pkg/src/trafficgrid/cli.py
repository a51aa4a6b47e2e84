"""Command line entry point: ``trafficgrid <command> ...``."""

import argparse
import datetime as dt
import glob
import json
import logging
import sys
from pathlib import Path

import numpy as np
from filelock import FileLock

from . import analysis, baselines, ingest, metrics, outliers, slots, static, synth
from ._validation import InvalidInputError
from .grid import CityConfig
from .tensorio import load_manifest, read_tensor, write_tensor

log = logging.getLogger("trafficgrid")

TENSOR_SUFFIXES = {".h5", ".hdf5", ".t4ct", ".bin"}


def load_stack(path):
    """Read a tensor file, or stack every tensor file in a directory (sorted by name)."""
    p = Path(path)
    if not p.is_dir():
        return read_tensor(p)
    files = sorted(f for f in p.iterdir() if f.suffix.lower() in TENSOR_SUFFIXES)
    if not files:
        raise InvalidInputError(f"{p}: no tensor files")
    arrays = [read_tensor(f) for f in files]
    if arrays[0].ndim == 4:
        return np.stack(arrays)
    return np.concatenate(arrays)


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)


def cmd_ingest(args):
    cfg = CityConfig.load(args.city_config)
    paths = sorted({p for pattern in args.probes for p in glob.glob(pattern)})
    if not paths:
        raise InvalidInputError(f"no probe files match {args.probes}")
    date = dt.date.fromisoformat(args.date)
    with FileLock(str(args.out) + ".lock"):
        acc = ingest.ingest_files(paths, cfg, date=date, workers=args.workers)
        write_tensor(args.out, ingest.finalize(acc, cfg), compress=args.compress)
    log.info("ingest stats: %s", acc.stats.to_dict())
    if args.stats:
        _write_json(args.stats, acc.stats.to_dict())


def cmd_static(args):
    cfg = CityConfig.load(args.city_config)
    raster = static.read_raster(args.raster)
    write_tensor(args.out, static.build_static(raster, cfg, max_detour=args.max_detour), compress=args.compress)


def cmd_slots_sample(args):
    city, days = load_manifest(args.days)
    drawn = slots.sample_slots(list(days.items()), args.n, args.seed, city=city)
    paths = slots.write_test_files(drawn, args.out_prefix, seed=args.seed, compress=args.compress)
    log.info("wrote %s", paths)


def cmd_score(args):
    pred, truth = load_stack(args.pred), load_stack(args.truth)
    if args.mask:
        mask = metrics.road_mask(read_tensor(args.mask), args.mask_mode)
        report = metrics.masked_mse(pred, truth, mask)
    else:
        report = metrics.mse(pred, truth)
    out = report.to_dict()
    if args.report:
        _write_json(args.report, out)
    print(json.dumps(out))


def cmd_mse_std(args):
    inputs = load_stack(args.inputs) if args.inputs else None
    rep = metrics.mse_vs_std(load_stack(args.pred), load_stack(args.truth), args.channel, args.bin_width, inputs)
    rep.to_frame().to_csv(args.out, index=False)


def cmd_pixel_stats(args):
    metrics.pixel_stats(load_stack(args.truth)).to_csv(args.out, index=False)


def cmd_daily_volume(args):
    _, days = load_manifest(args.days)
    analysis.daily_volume_curve(list(days.values()), args.label).to_csv(args.out)


def cmd_pixel(args):
    analysis.pixel_timeseries(args.day, args.row, args.col, args.heading).to_csv(args.out, index=False)


def cmd_outliers_detect(args):
    crit = outliers.OutlierCriteria.load(args.criteria) if args.criteria else outliers.OutlierCriteria()
    events = outliers.detect_outliers(read_tensor(args.day), crit)
    outliers.events_to_frame(events).to_csv(args.out, index=False)
    log.info("%d outlier event(s)", len(events))


def cmd_outliers_score(args):
    events = outliers.read_events(args.events)
    out = outliers.outlier_mask_score(load_stack(args.pred), load_stack(args.truth), events)
    if args.report:
        _write_json(args.report, out)
    print(json.dumps(out))


def cmd_outliers_make_tests(args):
    events = outliers.read_events(args.events)
    made, kept, skipped = outliers.make_outlier_tests(read_tensor(args.day), args.date, events, args.city)
    if not made:
        raise InvalidInputError("no event left a full test window")
    slots.write_test_files(made, args.out_prefix, compress=args.compress)
    outliers.events_to_frame(kept).to_csv(f"{args.out_prefix}_events.csv", index=False)
    log.info("%d test(s) written, %d event(s) skipped", len(made), skipped)


def cmd_baseline(args):
    write_tensor(args.out, baselines.predict(args.method, read_tensor(args.test)), compress=args.compress)


def cmd_synth_probes(args):
    cfg = CityConfig.load(args.city_config) if args.city_config else CityConfig()
    synth.write_probe_csv(args.out, args.n, cfg, args.date, args.seed, args.outside)


def build_parser():
    p = argparse.ArgumentParser(prog="trafficgrid", description="Traffic map movie pipeline and scoring tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def compress_flag(sp):
        sp.add_argument("--compress", action="store_true", help="gzip-compress HDF5 output")

    sp = sub.add_parser("ingest", help="aggregate probe CSVs into a day movie")
    sp.add_argument("--probes", nargs="+", required=True, help="CSV file(s) or glob(s)")
    sp.add_argument("--city-config", required=True)
    sp.add_argument("--date", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--stats")
    compress_flag(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("static", help="derive the 9-channel static tensor from a raster")
    sp.add_argument("--raster", required=True)
    sp.add_argument("--city-config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--max-detour", type=int, default=static.MAX_DETOUR)
    compress_flag(sp)
    sp.set_defaults(func=cmd_static)

    sp = sub.add_parser("slots", help="test-slot tools")
    ssub = sp.add_subparsers(dest="slots_command", required=True)
    s2 = ssub.add_parser("sample")
    s2.add_argument("--days", required=True, help="manifest JSON")
    s2.add_argument("--n", type=int, default=100)
    s2.add_argument("--seed", type=int, required=True)
    s2.add_argument("--out-prefix", required=True)
    compress_flag(s2)
    s2.set_defaults(func=cmd_slots_sample)

    sp = sub.add_parser("score", help="MSE of predictions against truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--mask", help="static tensor file; road pixels define the mask")
    sp.add_argument("--mask-mode", choices=[m.value for m in metrics.MaskMode], default="both")
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("analyze", help="diagnostic tables")
    asub = sp.add_subparsers(dest="analyze_command", required=True)
    a = asub.add_parser("mse-std")
    a.add_argument("--pred", required=True)
    a.add_argument("--truth", required=True, help="18-frame truth, or 6-frame truth with --inputs")
    a.add_argument("--inputs")
    a.add_argument("--channel", choices=["volume", "speed"], default="speed")
    a.add_argument("--bin-width", type=float, default=1.0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_mse_std)
    a = asub.add_parser("pixel-stats")
    a.add_argument("--truth", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_pixel_stats)
    a = asub.add_parser("daily-volume")
    a.add_argument("--days", required=True)
    a.add_argument("--label", default="")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_daily_volume)
    a = asub.add_parser("pixel")
    a.add_argument("--day", nargs="+", required=True)
    a.add_argument("--row", type=int, required=True)
    a.add_argument("--col", type=int, required=True)
    a.add_argument("--heading", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_pixel)

    sp = sub.add_parser("outliers", help="outlier detection and scoring")
    osub = sp.add_subparsers(dest="outliers_command", required=True)
    o = osub.add_parser("detect")
    o.add_argument("--day", required=True)
    o.add_argument("--criteria")
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_outliers_detect)
    o = osub.add_parser("score")
    o.add_argument("--pred", required=True)
    o.add_argument("--truth", required=True)
    o.add_argument("--events", required=True)
    o.add_argument("--report")
    o.set_defaults(func=cmd_outliers_score)
    o = osub.add_parser("make-tests")
    o.add_argument("--day", required=True)
    o.add_argument("--date", required=True)
    o.add_argument("--events", required=True)
    o.add_argument("--city", default="")
    o.add_argument("--out-prefix", required=True)
    compress_flag(o)
    o.set_defaults(func=cmd_outliers_make_tests)

    sp = sub.add_parser("baseline", help="run a reference predictor")
    sp.add_argument("--method", choices=sorted(baselines.METHODS), default="naive-average")
    sp.add_argument("--test", required=True)
    sp.add_argument("--out", required=True)
    compress_flag(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("synth", help="synthetic data")
    ysub = sp.add_subparsers(dest="synth_command", required=True)
    y = ysub.add_parser("probes")
    y.add_argument("--city-config")
    y.add_argument("--date", default="2020-04-01")
    y.add_argument("--n", type=int, default=1_000_000)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--outside", type=float, default=0.0)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth_probes)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except InvalidInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
