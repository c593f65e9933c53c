"""Command-line entry point.

Subcommands cover the full workflow: training a baseline model, running
the floating-point and stochastic forward passes, the operator-norm
analysis, length-grid sweeps, random-forest sensitivity, coarse/fine
planning, the published-figure cost comparison, and RNG quality reports.

Every run writes a ``manifest.json`` echoing the resolved configuration
into the output directory. All CSV output uses fixed formatting so
repeated runs with the same seed are byte-identical.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, costmodel, planner, sensitivity
from . import scinfer
from .bitstream import Encoding, uniformity_chi_square
from .model import (Dataset, accuracy, init_model, load_idx, load_model,
                    save_model, train_sgd)
from .rng import MAXIMAL_TAPS, Lfsr, Sng, Sobol, sobol_samples
from .scarith import mul_bipolar
from .scinfer import LengthConfig, weight_caps

STREAM_MAGIC = b"SCBS1"


def save_stream(stream, path) -> None:
    """Stream file: magic line, 'length L encoding E' line, packed bits.

    Bits are packed most-significant-first within each byte, in logical
    stream order (bit 0 of the stream is the top bit of the first byte).
    """
    with open(path, "wb") as f:
        f.write(STREAM_MAGIC + b"\n")
        f.write(f"length {stream.length} encoding "
                f"{stream.encoding.value}\n".encode("ascii"))
        f.write(stream.packed.tobytes())


def load_stream(path):
    from .bitstream import Bitstream
    with open(path, "rb") as f:
        if f.readline().strip() != STREAM_MAGIC:
            raise ValueError("bad stream file magic")
        fields = f.readline().decode("ascii").split()
        length = int(fields[1])
        encoding = Encoding(fields[3])
        packed = np.frombuffer(f.read(), dtype=np.uint8)
    return Bitstream(packed[: (length + 7) // 8].copy(), length, encoding)


def _parse_int_list(text):
    return [int(v) for v in str(text).replace("-", ",").split(",") if v]


def _write_manifest(args, command: str) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {k: (str(v) if isinstance(v, Path) else v)
                for k, v in sorted(vars(args).items()) if k != "func"}
    resolved["command"] = command
    resolved["version"] = __version__
    path = out_dir / f"manifest-{command}.json"
    with open(path, "w") as f:
        json.dump(resolved, f, indent=2, sort_keys=True)
        f.write("\n")
    return out_dir


def _write_csv(path, header, rows) -> None:
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _load_dataset(args, images_attr="images", labels_attr="labels",
                  normalize=False, limit=None) -> Dataset:
    data = load_idx(getattr(args, images_attr), getattr(args, labels_attr))
    if limit:
        data = data.subset(np.arange(min(limit, len(data))))
    if normalize:
        data = Dataset(2.0 * data.images - 1.0, data.labels, data.name)
    return data


def _model_normalize(model, args) -> bool:
    flag = getattr(args, "normalize_inputs", False)
    return flag or getattr(model, "normalized_inputs", False)


def cmd_train(args) -> int:
    out_dir = _write_manifest(args, "train")
    sizes = _parse_int_list(args.layers)
    states = _parse_int_list(args.stanh_states) if args.stanh_states else None
    if args.calibrate_gains:
        caps = scinfer.calibrate_encode_gains(sizes, states)
    else:
        caps = weight_caps(sizes, states)
    train = _load_dataset(args, normalize=args.normalize_inputs)
    model = init_model(sizes, seed=args.seed, stanh_states=states,
                       weight_caps=caps)
    if args.calibrate_gains:
        model.encode_gains = caps
    model = train_sgd(model, train, epochs=args.epochs, lr=args.lr,
                      seed=args.seed, batch_size=args.batch_size,
                      momentum=args.momentum,
                      weight_decay=args.weight_decay, weight_caps=caps,
                      input_binarize=args.input_binarize,
                      hidden_noise=args.hidden_noise, verbose=args.verbose)
    model.normalized_inputs = args.normalize_inputs
    save_model(model, args.out)
    print(f"train accuracy: {accuracy(model, train):.4f}")
    if args.val_images:
        val = _load_dataset(args, "val_images", "val_labels",
                            normalize=args.normalize_inputs)
        print(f"validation accuracy: {accuracy(model, val):.4f}")
    print(f"model written to {args.out}; manifest in {out_dir}")
    return 0


def cmd_infer_fp(args) -> int:
    out_dir = _write_manifest(args, "infer-fp")
    model = load_model(args.model)
    data = _load_dataset(args, normalize=_model_normalize(model, args),
                         limit=args.limit)
    from .model import forward_fp
    logits, _ = forward_fp(model, data.images)
    pred = logits.argmax(axis=1)
    acc = float((pred == data.labels).mean())
    _write_csv(out_dir / "predictions-fp.csv",
               ("sample", "label", "prediction"),
               [(i, int(l), int(p))
                for i, (l, p) in enumerate(zip(data.labels, pred))])
    print(f"floating-point accuracy: {acc:.4f} ({len(data)} samples)")
    return 0


def cmd_infer_sc(args) -> int:
    out_dir = _write_manifest(args, "infer-sc")
    model = load_model(args.model)
    lengths = _parse_int_list(args.lengths)
    config = LengthConfig(tuple(lengths), args.base_length)
    data = _load_dataset(args, normalize=_model_normalize(model, args),
                         limit=args.limit)
    logits = scinfer.batch_logits(model, data.images, config, seed=args.seed)
    pred = logits.argmax(axis=1)
    acc = float((pred == data.labels).mean())
    cost = planner.cost_report(config, model.layer_sizes, args.alpha)
    _write_csv(out_dir / "predictions-sc.csv",
               ("sample", "label", "prediction"),
               [(i, int(l), int(p))
                for i, (l, p) in enumerate(zip(data.labels, pred))])
    print(f"stochastic accuracy: {acc:.4f} ({len(data)} samples)")
    print(f"cycles: {cost.cycles}  saving_latency: {cost.saving_latency:.4f}"
          f"  saving_energy: {cost.saving_energy:.4f}")
    return 0


def cmd_analyze(args) -> int:
    out_dir = _write_manifest(args, "analyze")
    model = load_model(args.model)
    report = analysis.amplification(model)
    rows = list(report.csv_rows())
    _write_csv(out_dir / "amplification.csv", rows[0], rows[1:])
    print(f"{'layer':>5} {'norm':>10} {'accumulated':>12} {'importance':>10}")
    for i, (f, fa, imp) in enumerate(zip(report.layer_norms,
                                         report.accumulated,
                                         report.importance), 1):
        print(f"{i:>5} {f:>10.4f} {fa:>12.4f} {imp:>10.4f}")
    return 0


def cmd_sweep(args) -> int:
    out_dir = _write_manifest(args, "sweep")
    model = load_model(args.model)
    data = _load_dataset(args, normalize=_model_normalize(model, args))
    if args.subset:
        idx = np.random.default_rng(args.seed).choice(
            len(data), size=min(args.subset, len(data)), replace=False)
        data = data.subset(np.sort(idx))
    grid = _parse_int_list(args.grid)
    fixed = [v - 1 for v in _parse_int_list(args.fix_layers)] \
        if args.fix_layers else []
    records = sensitivity.sweep(model, data, grid, fixed_layers=fixed,
                                seed=args.seed,
                                base_length=args.base_length,
                                n_jobs=args.jobs)
    sensitivity.save_records(records, out_dir / "sweep.csv")
    print(f"{len(records)} configurations evaluated on {len(data)} samples; "
          f"records in {out_dir / 'sweep.csv'}")
    return 0


def cmd_sensitivity(args) -> int:
    out_dir = _write_manifest(args, "sensitivity")
    records = sensitivity.load_records(args.records)
    forest = sensitivity.rf_fit(records, n_trees=args.trees, seed=args.seed)
    imp = sensitivity.rf_importance(forest)
    rows = [(i + 1, float(v)) for i, v in enumerate(imp)]
    header = ["layer", "rf_importance"]
    if args.model:
        model = load_model(args.model)
        theo = analysis.amplification(model).importance
        rho = sensitivity.spearman_rank_correlation(imp, theo)
        rows = [(i + 1, float(v), float(t))
                for i, (v, t) in enumerate(zip(imp, theo))]
        header = ["layer", "rf_importance", "theoretical_importance"]
        print(f"spearman rank correlation vs theoretical: {rho:.4f}")
    _write_csv(out_dir / "importance.csv", header, rows)
    for row in rows:
        print("  ".join(_fmt(v) for v in row))
    return 0


def cmd_plan(args) -> int:
    out_dir = _write_manifest(args, f"plan-{args.mode}")
    sizes = _parse_int_list(args.sizes) if args.sizes else None
    if args.mode == "coarse":
        k = args.layers or (len(sizes) if sizes else None)
        if k is None:
            print("plan coarse needs --layers or --sizes", file=sys.stderr)
            return 2
        config = planner.plan_coarse(args.base_length, k)
        print("configuration:", ",".join(str(v) for v in config.lengths))
        print(f"cycles: {config.cycles}")
        print(f"saving_latency: {planner.saving_latency(config):.4f}")
        if sizes:
            print(f"saving_energy: "
                  f"{planner.saving_energy(config, sizes):.4f}")
        return 0
    # fine-grained: consume sweep records
    records = sensitivity.load_records(args.records)
    result = planner.plan_fine(records, sizes, args.base_length,
                               args.threshold, args.alpha)
    rows = []
    for r in records:
        cfg = LengthConfig(r.lengths, args.base_length)
        se = planner.saving_energy(cfg, sizes)
        sl = planner.saving_latency(cfg)
        rows.append(("-".join(str(v) for v in r.lengths), r.accuracy_loss,
                     se, sl, planner.score(se, sl, args.alpha)))
    _write_csv(out_dir / "plan-candidates.csv",
               ("lengths", "accuracy_loss", "saving_energy",
                "saving_latency", "score"), rows)
    print("configuration:", ",".join(str(v) for v in result.config.lengths))
    print(f"feasible: {result.feasible}  accuracy_loss: "
          f"{result.accuracy_loss:.4f}  threshold: {result.threshold:.4f}")
    print(f"score: {result.cost.score:.4f}  saving_energy: "
          f"{result.cost.saving_energy:.4f}  saving_latency: "
          f"{result.cost.saving_latency:.4f}  cycles: {result.cost.cycles}")
    if not result.feasible:
        print("warning: no configuration met the threshold; reporting the "
              "best-accuracy configuration", file=sys.stderr)
    return 0


def cmd_cost(args) -> int:
    out_dir = _write_manifest(args, "cost")
    rows = costmodel.load_published_rows(args.fixtures)
    comps = costmodel.compare_published(rows)
    table = []
    for c in comps:
        table.append((c.row.label, c.computed_cycles,
                      c.row.expected_cycles if c.row.expected_cycles
                      is not None else "",
                      c.computed_saving_energy, c.computed_saving_latency,
                      "" if c.saving_energy_diff is None
                      else c.saving_energy_diff,
                      "" if c.saving_latency_diff is None
                      else c.saving_latency_diff))
    _write_csv(out_dir / "cost-comparison.csv",
               ("label", "computed_cycles", "expected_cycles",
                "computed_saving_energy", "computed_saving_latency",
                "saving_energy_diff", "saving_latency_diff"), table)
    ok = costmodel.all_within_tolerance(comps)
    for row in table:
        print("  ".join(_fmt(v) for v in row))
    print("within tolerance:", ok)
    return 0 if ok else 1


def cmd_rng_stats(args) -> int:
    out_dir = _write_manifest(args, "rng-stats")
    lengths = _parse_int_list(args.lengths)
    rows = []
    for length in lengths:
        sob = sobol_samples(1, length) / float(1 << 16)
        lf = Lfsr(10)
        trunc = lf.samples(length) / 1024.0
        direct_width = max(4, (length - 1).bit_length())
        lf_direct = Lfsr(direct_width, MAXIMAL_TAPS.get(direct_width))
        direct = lf_direct.samples(length) / float(1 << direct_width)
        rows.append((length,
                     uniformity_chi_square(sob, args.bins),
                     uniformity_chi_square(trunc, args.bins),
                     uniformity_chi_square(direct, args.bins)))
    _write_csv(out_dir / "uniformity.csv",
               ("length", "sobol_chi2", "lfsr_truncated_chi2",
                "lfsr_direct_chi2"), rows)

    rng = np.random.default_rng(args.seed)
    pairs = rng.uniform(-1, 1, size=(args.mul_trials, 2))
    mul_rows = []
    for length in lengths:
        errs = {"sobol": [], "lfsr": []}
        for t, (a, b) in enumerate(pairs):
            sa = Sng(Sobol(26 + (2 * t) % 128)).generate(a, length)
            sb = Sng(Sobol(154 + (2 * t + 1) % 256)).generate(b, length)
            from .bitstream import decode
            errs["sobol"].append(decode(mul_bipolar(sa, sb)) - a * b)
            la = Sng(Lfsr(10, seed=1 + (7 * t) % 1022)).generate(a, length)
            lb = Sng(Lfsr(10, (10, 9, 7, 6),
                          seed=1 + (13 * t) % 1022)).generate(b, length)
            errs["lfsr"].append(decode(mul_bipolar(la, lb)) - a * b)
        mul_rows.append((length,
                         float(np.sqrt(np.mean(np.square(errs["sobol"])))),
                         float(np.sqrt(np.mean(np.square(errs["lfsr"]))))))
    _write_csv(out_dir / "multiplication-rmse.csv",
               ("length", "sobol_rmse", "lfsr_rmse"), mul_rows)
    for row in rows:
        print("chi2", "  ".join(_fmt(v) for v in row))
    for row in mul_rows:
        print("mul-rmse", "  ".join(_fmt(v) for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scasl",
        description="stochastic-computing MLP simulator and "
                    "sequence-length planner")
    parser.add_argument("--config-file", default=None,
                        help="key=value file supplying flag defaults "
                             "(command-line flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default="scasl-out")

    p = sub.add_parser("train", help="train a baseline model")
    common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--val-images")
    p.add_argument("--val-labels")
    p.add_argument("--layers", required=True,
                   help="comma-separated layer sizes, e.g. 784,128,64,32,10")
    p.add_argument("--stanh-states",
                   help="per-hidden-layer FSM sizes, e.g. 8,8,8")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--normalize-inputs", action="store_true",
                   help="feed the network 2x-1 instead of raw [0,1] pixels")
    p.add_argument("--calibrate-gains", action="store_true",
                   help="measure the stream executor's effective per-layer "
                        "gains and train against them")
    p.add_argument("--input-binarize", action="store_true",
                   help="train on stochastic +-1 input samples")
    p.add_argument("--hidden-noise", type=float, default=0.0)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer-fp", help="floating-point inference accuracy")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--normalize-inputs", action="store_true")
    p.set_defaults(func=cmd_infer_fp)

    p = sub.add_parser("infer-sc", help="stochastic inference accuracy")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--lengths", "--config", required=True,
                   help="per-layer stream lengths, e.g. 1024,512,256,256")
    p.add_argument("--base-length", type=int, default=1024)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--limit", type=int)
    p.add_argument("--normalize-inputs", action="store_true")
    p.set_defaults(func=cmd_infer_sc)

    p = sub.add_parser("analyze", help="operator-norm amplification report")
    common(p)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="length-grid accuracy sweep")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--grid", default="64,128,256,512,1024")
    p.add_argument("--fix-layers", default="1",
                   help="1-based layers pinned to the base length")
    p.add_argument("--subset", type=int, default=0,
                   help="evaluate on a seeded random subset of this size")
    p.add_argument("--base-length", type=int, default=1024)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--normalize-inputs", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sensitivity",
                       help="random-forest layer importance from sweep records")
    common(p)
    p.add_argument("--records", required=True)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--model", help="also report theoretical importance")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("plan", help="choose a length configuration")
    common(p)
    p.add_argument("mode", choices=("coarse", "fine"))
    p.add_argument("--base-length", "--L", type=int, default=1024)
    p.add_argument("--layers", type=int, help="layer count k (coarse)")
    p.add_argument("--sizes", help="comma-separated layer sizes")
    p.add_argument("--records", help="sweep records CSV (fine)")
    p.add_argument("--threshold", type=float, default=0.001)
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("cost", help="compare cost model to published figures")
    common(p)
    p.add_argument("--fixtures", default=None)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("rng-stats",
                       help="uniformity and multiplication-error reports")
    common(p)
    p.add_argument("--lengths", default="128,256,512,1024")
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--mul-trials", type=int, default=100)
    p.set_defaults(func=cmd_rng_stats)

    return parser


def _apply_config_file(parser, argv):
    if "--config-file" not in argv:
        return argv
    idx = argv.index("--config-file")
    path = argv[idx + 1]
    defaults = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            defaults[key.strip().replace("-", "_")] = value.strip()
    parser.set_defaults(**defaults)
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
    except OSError as e:
        print(f"error: cannot read config file: {e}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
