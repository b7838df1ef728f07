"""
tspfcn command line: gen, render, solve, train, predict, decode, eval, bench, sweep

exit codes: 0 ok, 1 usage, 2 data error, 3 numeric guard
"""
import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

from . import __version__
from .decode import DecodeConfig, post_process
from .evaluation import (
    BenchConfig,
    EvalConfig,
    OraclePredictor,
    ModelPredictor,
    benchmark_solvers,
    departure_sweep,
    evaluate_samples,
    generalization_sweep,
    monotone_times,
    plot_departure_sweep,
    plot_generalization,
    report_records,
    sweep_records,
    write_csv,
    write_json,
)
from .exceptions import ConfigError, DatasetError, MalformedFileError, TspFcnError
from .instance import instance_from_dict, load_instances, save_instances
from .net import ArchConfig, init_model, load_checkpoint, save_checkpoint
from .raster import (
    FULL_GRAPH,
    SCATTER,
    RenderConfig,
    Sample,
    load_png,
    mask_to_image,
    render_sample,
    save_png,
)
from .solvers import ALGORITHMS, AcoConfig, GaConfig, SolveStats, solve
from .store import DatasetStore, build_dataset, file_digest, generate_samples
from .training import TrainConfig, fine_tune, train

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "TSPFCN_DATA_DIR"
RUN_MANIFEST = "run_manifest.json"


@dataclass
class RunManifest:
    command: str
    argv: List[str]
    config: Dict = field(default_factory=dict)
    seeds: Dict = field(default_factory=dict)
    version: str = __version__
    started: float = 0.0
    finished: float = 0.0
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)

    def add_input(self, path):
        if os.path.isfile(path):
            self.inputs[str(path)] = file_digest(path)
        else:
            self.inputs[str(path)] = ""

    def write(self, directory):
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, RUN_MANIFEST), "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


##########################################################################################
# HELPERS
##########################################################################################
def parse_range(text: str) -> List[int]:
    """'4..12', '4,6,8' or '10'"""
    try:
        if ".." in text:
            low, high = text.split("..")
            return list(range(int(low), int(high) + 1))
        return [int(v) for v in text.split(",")]
    except ValueError as e:
        raise ConfigError(f"Bad integer range {text!r}") from e


def _data_dir(args) -> str:
    path = args.data or os.environ.get(DATA_DIR_ENV)
    if not path:
        raise ConfigError(f"No dataset directory: pass --data or set {DATA_DIR_ENV}")
    return path


def _open_store(args, split=None) -> DatasetStore:
    path = _data_dir(args)
    if not os.path.isdir(path):
        raise DatasetError(f"Dataset directory {path} does not exist")
    store = DatasetStore(path, split or args.split)
    if not len(store):
        raise DatasetError(f"Split {store.split!r} of {path} is empty")
    return store


def _render_config(args) -> RenderConfig:
    base = RenderConfig.desk() if args.size == 64 else RenderConfig(w=args.size, h=args.size)
    kwargs = {"mode": args.mode}
    if args.city_halfwidth is not None:
        kwargs["city_halfwidth"] = args.city_halfwidth
    if args.label_halfwidth is not None:
        kwargs["label_halfwidth"] = args.label_halfwidth
    return RenderConfig.from_dict({**base.to_dict(), **kwargs})


def _predictor(args, manifest: RunManifest):
    if args.oracle_passthrough and args.checkpoint:
        raise ConfigError("--oracle-passthrough and --checkpoint are mutually exclusive")
    if args.oracle_passthrough:
        return OraclePredictor()
    if not args.checkpoint:
        raise ConfigError("Pass --checkpoint or --oracle-passthrough")
    manifest.add_input(args.checkpoint)
    return ModelPredictor(load_checkpoint(args.checkpoint))


def _decode_config(args) -> DecodeConfig:
    return DecodeConfig(m=args.m, departure=getattr(args, "departure", None), seed=args.seed)


##########################################################################################
# COMMANDS
##########################################################################################
def cmd_gen(args, manifest: RunManifest):
    cfg = _render_config(args)
    out = args.out or _data_dir(args)
    samples = generate_samples(args.n, args.count, args.seed, cfg, args.algo, args.jobs)
    store = DatasetStore(out, args.split)
    build_dataset(store, samples, {"n": args.n, "seed": args.seed, "render": cfg.to_dict(), "labels": args.algo})
    manifest.config = {"render": cfg.to_dict(), "n": args.n, "count": args.count, "algo": args.algo}
    manifest.outputs.append(out)
    logger.info("Wrote %d samples to %s (split %s)", len(store), out, store.split)
    return out


def cmd_render(args, manifest: RunManifest):
    source = _open_store(args)
    cfg = _render_config(args)
    if not args.out:
        raise ConfigError("render needs --out")
    if os.path.abspath(args.out) == os.path.abspath(_data_dir(args)):
        raise ConfigError("render must not overwrite its input dataset")
    target = DatasetStore(args.out, args.split)
    samples = []
    for sample in source.samples():
        tour = sample.instance.solution()
        if tour is None:
            raise DatasetError(f"Instance {sample.instance.id} has no stored tour")
        image, label = render_sample(sample.instance, tour, cfg)
        samples.append(Sample(sample.instance, image, label))
    build_dataset(target, samples, {**(source.manifest() or {}), "render": cfg.to_dict()})
    manifest.inputs[_data_dir(args)] = source.digest()
    manifest.config = {"render": cfg.to_dict()}
    manifest.outputs.append(args.out)
    return args.out


def cmd_solve(args, manifest: RunManifest):
    if not args.out:
        raise ConfigError("solve needs --out")
    ga = GaConfig(args.ga_pop, args.ga_cross, args.ga_mut, args.ga_gens, args.seed)
    aco = AcoConfig(args.aco_ants, args.aco_rho, args.aco_alpha, args.aco_beta, args.aco_iters, args.seed)
    manifest.add_input(args.input)
    instances = load_instances(args.input)
    solved = []
    for instance in instances:
        stats = SolveStats()
        tour = solve(instance, args.algo, ga, aco, stats)
        logger.info("%s: %s length %.6f in %.3f s", instance.id, args.algo, tour.length, stats.seconds)
        solved.append(instance.with_solution(tour))
    save_instances(solved, args.out)
    manifest.config = {"algo": args.algo, "ga": ga.to_dict(), "aco": aco.to_dict()}
    manifest.outputs.append(args.out)
    return os.path.dirname(os.path.abspath(args.out))


def _arch(args) -> ArchConfig:
    return {"desk": ArchConfig.desk, "large": ArchConfig.large, "tiny": ArchConfig.tiny}[args.arch]()


def cmd_train(args, manifest: RunManifest):
    store = _open_store(args)
    test = None
    if args.test_split:
        test = DatasetStore(_data_dir(args), args.test_split)
        if not len(test):
            test = None
    if args.checkpoint:
        manifest.add_input(args.checkpoint)
        model = load_checkpoint(args.checkpoint)
    elif args.fine_tune:
        raise ConfigError("--fine-tune needs --checkpoint")
    else:
        model = init_model(_arch(args), args.seed)
    cfg = TrainConfig(
        learning_rate=args.lr,
        dropout=args.dropout,
        max_iterations=args.iterations,
        chunk_size=args.chunk_size,
        snapshot_every=args.snapshot_every,
        seed=args.seed,
        loss_mode=args.loss_mode,
    )
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    kwargs = dict(
        test=test,
        snapshot_dir=os.path.join(out, "snapshots") if args.snapshots else None,
        curve_path=os.path.join(out, "learning_curve.csv"),
    )
    if args.fine_tune:
        result = fine_tune(model, store, cfg, **kwargs)
    else:
        result = train(store, model, cfg, **kwargs)
    checkpoint = os.path.join(out, "model.ckpt")
    save_checkpoint(result.model, checkpoint)
    manifest.inputs[_data_dir(args)] = store.digest()
    manifest.config = {"train": cfg.to_dict(), "arch": result.model.arch.to_dict()}
    manifest.outputs += [checkpoint, kwargs["curve_path"]]
    return out


def cmd_predict(args, manifest: RunManifest):
    predictor = _predictor(args, manifest)
    store = _open_store(args)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    for sample in store.samples():
        path = os.path.join(out, f"{sample.instance.id}.png")
        save_png(mask_to_image(predictor.predict_mask(sample)), path)
        manifest.outputs.append(path)
    return out


def _load_instance(path, instance_id=None):
    if path.endswith(".jsonl"):
        instances = load_instances(path)
        if instance_id is None:
            if len(instances) != 1:
                raise ConfigError(f"{path} holds {len(instances)} instances; pass --id")
            return instances[0]
        for instance in instances:
            if instance.id == instance_id:
                return instance
        raise DatasetError(f"No instance {instance_id} in {path}")
    with open(path, encoding="utf-8") as f:
        try:
            record = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedFileError(f"Unable to parse {path}: {e}") from e
    return instance_from_dict(record)


def cmd_decode(args, manifest: RunManifest):
    if not args.out:
        raise ConfigError("decode needs --out")
    manifest.add_input(args.mask)
    manifest.add_input(args.instance)
    mask = load_png(args.mask)
    instance = _load_instance(args.instance, args.id)
    cfg = _decode_config(args)
    solution = post_process(mask, instance, cfg)
    write_json(solution.to_dict(), args.out)
    manifest.config = {"decode": cfg.to_dict()}
    manifest.outputs.append(args.out)
    logger.info("Decoded %s: length %.6f from %d departures", instance.id, solution.length, solution.m)
    return os.path.dirname(os.path.abspath(args.out))


def cmd_eval(args, manifest: RunManifest):
    predictor = _predictor(args, manifest)
    store = _open_store(args)
    render = None
    if args.mode != FULL_GRAPH or args.rerender:
        base = store.render_config() or RenderConfig.desk()
        render = RenderConfig.from_dict({**base.to_dict(), "mode": args.mode})
    cfg = EvalConfig(_decode_config(args), render, args.jobs)
    report, results = evaluate_samples(predictor, store, cfg)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    write_json(report.to_dict(), os.path.join(out, "metrics.json"))
    write_csv([report.to_dict()], os.path.join(out, "metrics.csv"))
    write_csv(
        [{**asdict(r), "order": " ".join(map(str, r.order))} for r in results],
        os.path.join(out, "samples.csv"),
    )
    manifest.inputs[_data_dir(args)] = store.digest()
    manifest.config = {"eval": cfg.to_dict()}
    manifest.outputs += [os.path.join(out, f) for f in ("metrics.json", "metrics.csv", "samples.csv")]
    return out


def cmd_bench(args, manifest: RunManifest):
    cfg = BenchConfig(
        n_values=parse_range(args.n),
        instances_per_n=args.instances,
        repeats=args.repeats,
        warmup=args.warmup,
        seed=args.seed,
        algorithms=tuple(args.algos.split(",")),
        decode=DecodeConfig(m=args.m, seed=args.seed),
        render=RenderConfig.desk() if args.size == 64 else RenderConfig(w=args.size, h=args.size),
    )
    predictor = False
    if args.oracle_passthrough or args.checkpoint:
        predictor = _predictor(args, manifest)
    rows = benchmark_solvers(cfg, predictor)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    write_csv([r.to_record(cfg.algorithms) for r in rows], os.path.join(out, "bench.csv"))
    write_json(
        {"rows": [r.to_record(cfg.algorithms) for r in rows], "monotone": monotone_times(rows)},
        os.path.join(out, "bench.json"),
    )
    manifest.config = {"bench": cfg.to_dict()}
    manifest.outputs += [os.path.join(out, "bench.csv"), os.path.join(out, "bench.json")]
    return out


def cmd_sweep(args, manifest: RunManifest):
    predictor = _predictor(args, manifest)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    if args.kind == "generalization":
        render = RenderConfig.desk() if args.size == 64 else RenderConfig(w=args.size, h=args.size)
        cfg = EvalConfig(DecodeConfig(m=args.m, seed=args.seed), None, args.jobs)
        reports = generalization_sweep(predictor, parse_range(args.n), args.samples, args.seed, render, cfg)
        records = report_records(reports)
        if args.plot:
            plot_generalization(reports, os.path.join(out, "sweep.png"))
        manifest.config = {"kind": args.kind, "eval": cfg.to_dict(), "render": render.to_dict()}
    else:
        store = _open_store(args)
        samples = store.samples()
        masks = [predictor.predict_mask(s) for s in samples]
        instances = [s.instance for s in samples]
        optimal = [s.instance.length for s in samples]
        m_values = parse_range(args.m_values)
        rows = departure_sweep(masks, instances, optimal, m_values, args.seed, args.departure or 0)
        records = sweep_records(rows)
        if args.plot:
            plot_departure_sweep(rows, os.path.join(out, "sweep.png"))
        manifest.inputs[_data_dir(args)] = store.digest()
        manifest.config = {"kind": args.kind, "m_values": m_values}
    write_csv(records, os.path.join(out, "sweep.csv"))
    write_json(records, os.path.join(out, "sweep.json"))
    manifest.outputs += [os.path.join(out, "sweep.csv"), os.path.join(out, "sweep.json")]
    return out


COMMANDS = {
    "gen": cmd_gen,
    "render": cmd_render,
    "solve": cmd_solve,
    "train": cmd_train,
    "predict": cmd_predict,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
}


##########################################################################################
# PARSER
##########################################################################################
def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", default=None)
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--quiet", action="store_true")

    data = _Parser(add_help=False)
    data.add_argument("--data", default=None, help=f"dataset directory (default ${DATA_DIR_ENV})")
    data.add_argument("--split", default="default")

    train_data = _Parser(add_help=False)
    train_data.add_argument("--data", default=None, help=f"dataset directory (default ${DATA_DIR_ENV})")
    train_data.add_argument("--split", default="train")

    render = _Parser(add_help=False)
    render.add_argument("--size", type=int, default=64)
    render.add_argument("--mode", choices=(FULL_GRAPH, SCATTER), default=FULL_GRAPH)
    render.add_argument("--city-halfwidth", type=int, default=None)
    render.add_argument("--label-halfwidth", type=int, default=None)

    model = _Parser(add_help=False)
    model.add_argument("--checkpoint", default=None)
    model.add_argument("--oracle-passthrough", action="store_true")

    decode = _Parser(add_help=False)
    decode.add_argument("--m", type=int, default=None)

    parser = _Parser(prog="tspfcn", description="image-to-image TSP solving with a fully convolutional network")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common, data, render], help="generate a labeled dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--algo", choices=("dp", "exh", "bb"), default="dp")

    sub.add_parser("render", parents=[common, data, render], help="re-render a dataset")

    p = sub.add_parser("solve", parents=[common], help="solve instances with a classical solver")
    p.add_argument("--algo", choices=ALGORITHMS, required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ga-pop", type=int, default=GaConfig.population)
    p.add_argument("--ga-cross", type=float, default=GaConfig.crossover_rate)
    p.add_argument("--ga-mut", type=float, default=GaConfig.mutation_rate)
    p.add_argument("--ga-gens", type=int, default=GaConfig.generations)
    p.add_argument("--aco-ants", type=int, default=AcoConfig.ant_num)
    p.add_argument("--aco-rho", type=float, default=AcoConfig.rho)
    p.add_argument("--aco-alpha", type=float, default=AcoConfig.alpha)
    p.add_argument("--aco-beta", type=float, default=AcoConfig.beta)
    p.add_argument("--aco-iters", type=int, default=AcoConfig.iterations)

    p = sub.add_parser("train", parents=[common, train_data], help="train or fine-tune the network")
    p.add_argument("--test-split", default="test")
    p.add_argument("--arch", choices=("desk", "large", "tiny"), default="desk")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--fine-tune", action="store_true")
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--dropout", type=float, default=TrainConfig.dropout)
    p.add_argument("--iterations", type=int, default=TrainConfig.max_iterations)
    p.add_argument("--chunk-size", type=int, default=TrainConfig.chunk_size)
    p.add_argument("--snapshot-every", type=int, default=TrainConfig.snapshot_every)
    p.add_argument("--loss-mode", choices=("categorical", "binary"), default=TrainConfig.loss_mode)
    p.add_argument("--snapshots", action="store_true")

    sub.add_parser("predict", parents=[common, data, model], help="write black/white prediction masks")

    p = sub.add_parser("decode", parents=[common, decode], help="decode a mask into a tour")
    p.add_argument("--mask", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--id", default=None)
    p.add_argument("--departure", type=int, default=None)

    p = sub.add_parser("eval", parents=[common, data, model, decode], help="evaluate the full pipeline")
    p.add_argument("--mode", choices=(FULL_GRAPH, SCATTER), default=FULL_GRAPH)
    p.add_argument("--rerender", action="store_true")

    p = sub.add_parser("bench", parents=[common, model, decode], help="time solvers and the pipeline")
    p.add_argument("--n", default="4..12")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--algos", default=",".join(ALGORITHMS))
    p.add_argument("--size", type=int, default=64)

    p = sub.add_parser("sweep", parents=[common, data, model, decode], help="generalization or departure sweep")
    p.add_argument("--kind", choices=("generalization", "departure"), default="generalization")
    p.add_argument("--n", default="4..12")
    p.add_argument("--samples", type=int, default=480)
    p.add_argument("--m-values", default="1..10")
    p.add_argument("--departure", type=int, default=None)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--plot", action="store_true")
    return parser


def _configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(f"tspfcn: error: {e}", file=sys.stderr)
        return e.exit_code
    _configure_logging(args)
    manifest = RunManifest(args.command, argv, seeds={"seed": args.seed}, started=time.time())
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out_dir = COMMANDS[args.command](args, manifest)
    except TspFcnError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        logger.error("I/O error: %s", e)
        return 2
    manifest.finished = time.time()
    manifest.write(out_dir)
    return 0
