"""Command-line surface.

Subcommands: ``process`` (render audio through a model), ``metrics``
(compare a render to its reference), ``bench`` (real-time speed-ratio
protocol), ``init`` (write random or passthrough weights), ``synth``
(generate an input/target pair with the reference compressor) and
``inspect`` (configuration and parameter count of a container).

Controls are normalized: ``--peak-reduction`` in [0, 1] and ``--limit``
0 or 1. Hardware-style front-panel values (0-100) map on as value * 0.01.

Exit codes: 0 success, 2 usage or input error, 1 internal error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, container, drc, metrics, model, stream, wavio
from .errors import S4dcError


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (S4dcError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="s4dc",
        description="S4D dynamic range compressor: render, measure, benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="render audio through a model")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--peak-reduction", type=float, required=True,
                   help="normalized peak reduction, 0..1")
    p.add_argument("--limit", type=int, choices=(0, 1), default=0,
                   help="0 = compress, 1 = limit")
    p.add_argument("--buffer", type=int, default=4096)
    p.add_argument("--per-sample", action="store_true",
                   help="step the recurrence sample by sample (no FFT)")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("metrics", help="compare a render against a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--render", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="buffered-streaming speed ratios")
    p.add_argument("--weights", required=True)
    p.add_argument("--sizes", default=",".join(map(str, bench.DEFAULT_BUFFER_SIZES)),
                   help="comma-separated buffer sizes")
    p.add_argument("--seconds", type=float, default=60.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("init", help="write a weight container")
    p.add_argument("--config", default="32,4,4",
                   help="channels,ssm_order,num_blocks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--passthrough", action="store_true",
                   help="analytic tanh-passthrough fixture instead of random")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("synth", help="synthesize an input/target pair")
    p.add_argument("--seconds", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sample-rate", type=int, default=44100)
    p.add_argument("--threshold-db", type=float, default=-20.0)
    p.add_argument("--ratio", type=float, default=4.0)
    p.add_argument("--attack-ms", type=float, default=10.0)
    p.add_argument("--release-ms", type=float, default=300.0)
    p.add_argument("--makeup-db", type=float, default=0.0)
    p.add_argument("--knee-db", type=float, default=6.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="print container config and size")
    p.add_argument("--weights", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    return parser


def _load_weights(path):
    return container.load(Path(path).read_bytes())


def cmd_process(args) -> int:
    weights = _load_weights(args.weights)
    samples, rate = wavio.read_wav(Path(args.input).read_bytes())
    ctrl = model.ControlVector(args.peak_reduction, float(args.limit))
    if args.per_sample:
        sp = stream.open_stream(weights, ctrl, mode="recurrent", buffer_hint=1)
        out = np.array([sp.process_sample(v) for v in samples])
    else:
        if args.buffer < 1:
            raise ValueError("--buffer must be >= 1")
        sp = stream.open_stream(weights, ctrl, mode="fft", buffer_hint=args.buffer)
        rendered = [sp.process_buffer(samples[lo:lo + args.buffer]).copy()
                    for lo in range(0, len(samples), args.buffer)]
        out = np.concatenate(rendered) if rendered else np.zeros(0)
    Path(args.output).write_bytes(wavio.write_wav(out, rate))
    return 0


def cmd_metrics(args) -> int:
    reference, ref_rate = wavio.read_wav(Path(args.reference).read_bytes())
    render, ren_rate = wavio.read_wav(Path(args.render).read_bytes())
    if ref_rate != ren_rate:
        raise ValueError(f"sample rates differ: {ref_rate} vs {ren_rate}")
    report = metrics.compare(reference, render, ref_rate)
    if args.json:
        print(report.to_json(indent=2))
    else:
        for name, value in report.to_dict().items():
            print(f"{name:12s} {value}")
    return 0


def cmd_bench(args) -> int:
    weights = _load_weights(args.weights)
    sizes = tuple(int(s) for s in args.sizes.split(",") if s)
    report = bench.run_bench(weights, buffer_sizes=sizes,
                             audio_seconds=args.seconds)
    print(report.to_json(indent=2) if args.json else report.table())
    return 0


def cmd_init(args) -> int:
    try:
        channels, order, blocks = (int(v) for v in args.config.split(","))
    except ValueError:
        raise ValueError("--config must be 'channels,ssm_order,num_blocks'") from None
    config = model.ModelConfig(num_blocks=blocks, channels=channels,
                               ssm_order=order)
    if args.passthrough:
        weights = model.make_passthrough_weights(config)
    else:
        weights = model.make_random_weights(config, seed=args.seed)
    Path(args.out).write_bytes(container.save(weights))
    print(f"wrote {args.out}: c={channels} N={order} blocks={blocks} "
          f"params={container.count_params(weights)}")
    return 0


def cmd_synth(args) -> int:
    params = drc.DrcParams(
        threshold_db=args.threshold_db, ratio=args.ratio,
        attack_ms=args.attack_ms, release_ms=args.release_ms,
        makeup_db=args.makeup_db, knee_db=args.knee_db)
    n = int(args.seconds * args.sample_rate)
    dry = bench.synth_signal(n, seed=args.seed, sample_rate=args.sample_rate)
    wet = drc.compress(dry, params, args.sample_rate)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "input.wav").write_bytes(wavio.write_wav(dry, args.sample_rate))
    (out_dir / "target.wav").write_bytes(wavio.write_wav(wet, args.sample_rate))
    print(f"wrote {out_dir / 'input.wav'} and {out_dir / 'target.wav'}")
    return 0


def cmd_inspect(args) -> int:
    weights = _load_weights(args.weights)
    cfg = weights.config
    count = container.count_params(weights)
    if args.json:
        print(json.dumps({"config": vars(cfg).copy(), "params": count}, indent=2))
    else:
        for name, value in vars(cfg).items():
            print(f"{name:24s} {value}")
        print(f"{'params':24s} {count}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
