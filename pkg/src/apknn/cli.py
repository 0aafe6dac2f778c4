"""Command-line front end for the fabric compiler and its models.

Subcommands: ``compile`` turns a dataset into per-partition board
images with layout sidecars and a resource report, ``query`` drives
compiled images and merges their answers, ``oracle`` scores the same
inputs exactly, ``verify`` holds the two pipelines to each other,
``index`` builds and searches the approximate-search structures,
``model`` prints the analytic performance, bandwidth, and resource
reports, and ``reproduce`` recomputes one stored reference table
and fails the exit status when a cell lands out of tolerance.

Every command is deterministic given its inputs, configuration, and
seed. Results are line-delimited JSON records; reports render as
aligned text or CSV.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .codec import KnnResult, merge_partitions, results_to_jsonl
from .compiler import (
    BoardImage,
    CompileOptions,
    Reduction,
    compile_partition,
    partition_dataset,
)
from .datasets import load_dataset
from .fabric import FabricConfig
from .index import (
    IndexStructure,
    build_kdtree,
    build_kmeans,
    build_lsh,
    plan_and_search,
)
from .oracle import knn_exact_many
from .perf import (
    LARGE_N,
    PlatformParams,
    WorkloadSpec,
    improvement_factors,
    large_runtime,
    optext_runtime,
    reconfigurations,
    report_bandwidth,
    reporting_feasible,
    small_runtime,
    standard_workloads,
)
from .reproduce import TABLES, reproduce_table
from .resources import CapacityProfile, resource_report

__all__ = ["RunConfig", "build_parser", "main"]


_CONFIG_SECTIONS = ("fabric", "platform", "capacity", "workloads", "seed")


@dataclasses.dataclass
class RunConfig:
    """Structured run configuration; every default matches the models.

    Loaded from a single JSON document with sections ``fabric``,
    ``platform``, ``capacity``, ``workloads``, and ``seed``. Unknown
    keys anywhere are rejected, so typos fail loudly instead of
    silently running on defaults.
    """

    fabric: FabricConfig = dataclasses.field(default_factory=FabricConfig)
    platform: PlatformParams = dataclasses.field(
        default_factory=PlatformParams)
    capacity: CapacityProfile = dataclasses.field(
        default_factory=CapacityProfile)
    workloads: tuple = ()
    seed: int = 0

    @classmethod
    def from_document(cls, doc: dict) -> "RunConfig":
        unknown = set(doc) - set(_CONFIG_SECTIONS)
        if unknown:
            raise ValueError(
                f"unknown config keys: {', '.join(sorted(unknown))}")

        def section(factory, name):
            data = doc.get(name, {})
            if not isinstance(data, dict):
                raise ValueError(f"config section {name!r} must be a map")
            try:
                return factory(**data)
            except TypeError as err:
                raise ValueError(f"bad config section {name!r}: {err}")

        cap_doc = doc.get("capacity", {})
        if "table" in cap_doc:
            cap_doc = dict(cap_doc, table={
                int(k): int(v) for k, v in cap_doc["table"].items()})
        try:
            capacity = CapacityProfile(**cap_doc)
        except TypeError as err:
            raise ValueError(f"bad config section 'capacity': {err}")
        workloads = tuple(
            _workload(entry) for entry in doc.get("workloads", []))
        return cls(
            fabric=section(FabricConfig, "fabric"),
            platform=section(PlatformParams, "platform"),
            capacity=capacity,
            workloads=workloads,
            seed=int(doc.get("seed", 0)),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        if path is None:
            return cls()
        with open(path) as fh:
            return cls.from_document(json.load(fh))

    def resolved_workloads(self, n: int | None = None) -> tuple:
        if self.workloads:
            return self.workloads
        return standard_workloads(n=n, profile=self.capacity)


def _workload(entry: dict) -> WorkloadSpec:
    if not isinstance(entry, dict):
        raise ValueError("workload entries must be maps")
    try:
        return WorkloadSpec(**entry)
    except TypeError as err:
        raise ValueError(f"bad workload entry: {err}")


def _options_from_args(args) -> CompileOptions:
    reduction = None
    if args.reduction:
        group, budget = args.reduction
        reduction = Reduction(group, budget)
    return CompileOptions(
        packing_factor=args.packing,
        multiplexing=args.multiplex,
        reduction=reduction,
        counter_increment=args.counter_increment,
        fan_in=args.fan_in,
    )


def _add_option_flags(parser) -> None:
    parser.add_argument("--packing", type=int, default=1, metavar="P",
                        help="vectors per shared trellis (default 1)")
    parser.add_argument("--multiplex", action="store_true",
                        help="carry up to 7 queries per symbol stream")
    parser.add_argument("--reduction", nargs=2, type=int, default=None,
                        metavar=("GROUP", "BUDGET"),
                        help="per-group report budget")
    parser.add_argument("--counter-increment", action="store_true",
                        help="pack 7 dimensions per data symbol")
    parser.add_argument("--fan-in", type=int, default=16, metavar="F",
                        help="collector tree fan-in (default 16)")


def _add_config_flag(parser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON run configuration")


def _fabric_for(config: RunConfig, options: CompileOptions) -> FabricConfig:
    fab = config.fabric
    if options.counter_increment and not fab.increment_by_n:
        fab = dataclasses.replace(fab, increment_by_n=True)
    return fab


def _load_queries(path) -> np.ndarray:
    queries = load_dataset(path)
    if queries.shape[0] == 0:
        raise ValueError("query file holds no vectors")
    return queries


def _write_results(results, out) -> None:
    text = results_to_jsonl(results)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


class Report:
    """Aligned quantity/value listing with a CSV twin."""

    def __init__(self, title: str):
        self.title = title
        self.rows: list = []

    def add(self, quantity: str, value) -> None:
        self.rows.append((quantity, value))

    @staticmethod
    def _fmt(value) -> str:
        if isinstance(value, bool):
            return "yes" if value else "no"
        if isinstance(value, float):
            return f"{value:.6g}"
        return str(value)

    def to_text(self) -> str:
        width = max(len(q) for q, _ in self.rows)
        lines = [self.title]
        for quantity, value in self.rows:
            lines.append(f"{quantity.ljust(width)}  {self._fmt(value)}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["quantity,value"]
        for quantity, value in self.rows:
            lines.append(f"{quantity},{self._fmt(value)}")
        return "\n".join(lines) + "\n"


def _emit_report(report: Report, csv_path) -> None:
    sys.stdout.write(report.to_text())
    if csv_path is not None:
        Path(csv_path).write_text(report.to_csv())


def cmd_compile(args) -> int:
    config = RunConfig.load(args.config)
    options = _options_from_args(args)
    vectors = load_dataset(args.dataset)
    if vectors.shape[0] == 0:
        raise ValueError("dataset holds no vectors")
    d = vectors.shape[1]
    capacity = args.capacity or config.capacity.capacity_for(d)
    fabric = _fabric_for(config, options)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    parts = partition_dataset(vectors, capacity)
    report = Report("compiled board resources")
    for part in parts:
        image = compile_partition(part, options, fabric, capacity=capacity)
        image.save(out / f"image_{part.index:04d}.json")
        layout_path = out / f"layout_{part.index:04d}.json"
        with open(layout_path, "w") as fh:
            json.dump(image.layout.to_document(), fh, sort_keys=True,
                      indent=2)
            fh.write("\n")
        stats = resource_report(image, rho=config.capacity.rho)
        for field in ("stes", "counters", "blocks", "half_cores",
                      "devices", "utilization"):
            report.add(f"partition {part.index} {field}", stats[field])
        print(f"wrote image_{part.index:04d}.json "
              f"(n={len(part)}, d={d}, mode={image.layout.mode})")
    (out / "resources.txt").write_text(report.to_text())
    (out / "resources.csv").write_text(report.to_csv())
    print(f"{len(parts)} partition(s) of capacity {capacity}")
    return 0


def _load_images(directory) -> list:
    paths = sorted(Path(directory).glob("image_*.json"))
    if not paths:
        raise ValueError(f"no board images under {directory}")
    images = [BoardImage.load(p) for p in paths]
    dims = {im.d for im in images}
    if len(dims) > 1:
        raise ValueError(f"images disagree on dimensionality: {sorted(dims)}")
    return images


def cmd_query(args) -> int:
    if args.k < 1:
        raise ValueError("k must be positive")
    images = _load_images(args.images)
    queries = _load_queries(args.queries)
    if queries.shape[1] != images[0].d:
        raise ValueError(
            f"query dimensionality {queries.shape[1]} does not match "
            f"images ({images[0].d})")
    per_partition = [image.run(queries, k=args.k) for image in images]
    _write_results(merge_partitions(per_partition, k=args.k), args.out)
    return 0


def _oracle_results(vectors, queries, k) -> list:
    neighbor_lists = knn_exact_many(vectors, queries, k)
    return [KnnResult(i, nbs) for i, nbs in enumerate(neighbor_lists)]


def cmd_oracle(args) -> int:
    if args.k < 1:
        raise ValueError("k must be positive")
    vectors = load_dataset(args.dataset)
    if vectors.shape[0] == 0:
        raise ValueError("dataset holds no vectors")
    queries = _load_queries(args.queries)
    if queries.shape[1] != vectors.shape[1]:
        raise ValueError(
            f"query dimensionality {queries.shape[1]} does not match "
            f"dataset ({vectors.shape[1]})")
    _write_results(_oracle_results(vectors, queries, args.k), args.out)
    return 0


def cmd_verify(args) -> int:
    if args.k < 1:
        raise ValueError("k must be positive")
    config = RunConfig.load(args.config)
    options = _options_from_args(args)
    vectors = load_dataset(args.dataset)
    if vectors.shape[0] == 0:
        raise ValueError("dataset holds no vectors")
    queries = _load_queries(args.queries)
    if queries.shape[1] != vectors.shape[1]:
        raise ValueError(
            f"query dimensionality {queries.shape[1]} does not match "
            f"dataset ({vectors.shape[1]})")
    capacity = args.capacity or config.capacity.capacity_for(
        vectors.shape[1])
    fabric = _fabric_for(config, options)
    per_partition = [
        compile_partition(part, options, fabric,
                          capacity=capacity).run(queries, k=args.k)
        for part in partition_dataset(vectors, capacity)]
    fabric_results = merge_partitions(per_partition, k=args.k)
    oracle_results = _oracle_results(vectors, queries, args.k)
    for fr, orc in zip(fabric_results, oracle_results):
        if fr.neighbors != orc.neighbors:
            print(f"MISMATCH on query {fr.query_id}: fabric "
                  f"{fr.neighbors} vs oracle {orc.neighbors}")
            return 1
    print(f"OK: {len(queries)} queries against {len(vectors)} vectors "
          f"agree at k={args.k}")
    return 0


def cmd_index_build(args) -> int:
    config = RunConfig.load(args.config)
    vectors = load_dataset(args.dataset)
    if vectors.shape[0] == 0:
        raise ValueError("dataset holds no vectors")
    capacity = args.capacity or config.capacity.capacity_for(
        vectors.shape[1])
    seed = args.seed if args.seed is not None else config.seed
    if args.kind == "kd":
        index = build_kdtree(vectors, capacity, trees=args.trees, seed=seed)
    elif args.kind == "kmeans":
        index = build_kmeans(vectors, capacity, branching=args.branching,
                             seed=seed)
    else:
        index = build_lsh(vectors, capacity, tables=args.tables,
                          bits_per_key=args.bits_per_key, seed=seed)
    index.save(args.out)
    print(f"built {args.kind} index: {len(index.buckets)} buckets of "
          f"capacity {capacity} over {vectors.shape[0]} vectors")
    return 0


def cmd_index_search(args) -> int:
    if args.k < 1:
        raise ValueError("k must be positive")
    config = RunConfig.load(args.config)
    index = IndexStructure.load(args.index)
    queries = _load_queries(args.queries)
    plan, results = plan_and_search(
        index, queries, args.k, mode=args.mode,
        config=config.fabric if args.mode == "fabric" else None)
    print(f"visited {plan.reconfigurations} of {len(index.buckets)} "
          f"buckets, {sum(plan.scan_counts)} bucket scans",
          file=sys.stderr)
    _write_results(results, args.out)
    return 0


def cmd_model_perf(args) -> int:
    config = RunConfig.load(args.config)
    report = Report("analytic run-time model")
    if config.workloads:
        small_set = large_set = config.workloads
    else:
        small_set = standard_workloads(profile=config.capacity)
        large_set = standard_workloads(n=LARGE_N, profile=config.capacity)
    for w in small_set:
        if w.n <= w.capacity:
            report.add(f"{w.name} small-dataset run time [ms]",
                       small_runtime(w, config.platform) * 1e3)
    for w in large_set:
        report.add(f"{w.name} reconfigurations", reconfigurations(w))
        report.add(f"{w.name} generation-1 run time [s]",
                   large_runtime(w, 1, config.platform))
        report.add(f"{w.name} generation-2 run time [s]",
                   large_runtime(w, 2, config.platform))
        report.add(f"{w.name} optimized+extended run time [s]",
                   optext_runtime(w, config.platform))
        report.add(f"{w.name} total improvement factor",
                   improvement_factors(w, params=config.platform)["total"])
    _emit_report(report, args.csv)
    return 0


def cmd_model_bandwidth(args) -> int:
    config = RunConfig.load(args.config)
    reduction = tuple(args.reduction) if args.reduction else None
    report = Report("report bandwidth model")
    for w in config.resolved_workloads():
        bw = report_bandwidth(w, config.platform)
        report.add(f"{w.name} report bandwidth [Gbps]", bw / 1e9)
        report.add(f"{w.name} feasible at full rate",
                   reporting_feasible(w, config.platform))
        bw7 = report_bandwidth(w, config.platform, slices=7)
        report.add(f"{w.name} multiplexed x7 bandwidth [Gbps]", bw7 / 1e9)
        report.add(f"{w.name} feasible multiplexed x7",
                   reporting_feasible(w, config.platform, slices=7))
        if reduction:
            bwr = report_bandwidth(w, config.platform, reduction=reduction)
            report.add(f"{w.name} reduced bandwidth [Gbps]", bwr / 1e9)
    _emit_report(report, args.csv)
    return 0


def cmd_model_resources(args) -> int:
    config = RunConfig.load(args.config)
    options = _options_from_args(args)
    if args.synthetic:
        n, d = args.synthetic
        vectors = np.zeros((n, d), dtype=np.uint8)
    elif args.dataset:
        vectors = load_dataset(args.dataset)
    else:
        raise ValueError("give a dataset path or --synthetic N D")
    if vectors.shape[0] == 0:
        raise ValueError("dataset holds no vectors")
    capacity = args.capacity or config.capacity.capacity_for(
        vectors.shape[1])
    fabric = _fabric_for(config, options)
    report = Report("resource model")
    for part in partition_dataset(vectors, capacity):
        image = compile_partition(part, options, fabric, capacity=capacity)
        stats = resource_report(image, rho=config.capacity.rho)
        for field, value in stats.items():
            report.add(f"partition {part.index} {field}", value)
    _emit_report(report, args.csv)
    return 0


def cmd_reproduce(args) -> int:
    config = RunConfig.load(args.config)
    kwargs = {}
    if args.table in ("table1", "table2", "table8"):
        kwargs["params"] = config.platform
    rep = reproduce_table(args.table, **kwargs)
    sys.stdout.write(rep.to_text())
    if args.csv is not None:
        Path(args.csv).write_text(rep.to_csv())
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apknn",
        description="Automata-fabric kNN compiler, simulator, and models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a dataset to board images")
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--capacity", type=int, default=None)
    _add_option_flags(p)
    _add_config_flag(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("query", help="run queries against compiled images")
    p.add_argument("queries", type=Path)
    p.add_argument("--images", type=Path, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("oracle", help="score queries exactly")
    p.add_argument("dataset", type=Path)
    p.add_argument("queries", type=Path)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify",
                       help="compare the compiled pipeline to the oracle")
    p.add_argument("dataset", type=Path)
    p.add_argument("queries", type=Path)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--capacity", type=int, default=None)
    _add_option_flags(p)
    _add_config_flag(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("index", help="approximate-search index management")
    isub = p.add_subparsers(dest="index_command", required=True)

    b = isub.add_parser("build", help="build an index over a dataset")
    b.add_argument("dataset", type=Path)
    b.add_argument("--kind", choices=("kd", "kmeans", "lsh"), required=True)
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--capacity", type=int, default=None)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--trees", type=int, default=4)
    b.add_argument("--branching", type=int, default=8)
    b.add_argument("--tables", type=int, default=4)
    b.add_argument("--bits-per-key", type=int, default=None)
    _add_config_flag(b)
    b.set_defaults(func=cmd_index_build)

    s = isub.add_parser("search", help="search through a built index")
    s.add_argument("index", type=Path)
    s.add_argument("queries", type=Path)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--mode", choices=("fabric", "oracle"),
                   default="fabric")
    s.add_argument("--out", type=Path, default=None)
    _add_config_flag(s)
    s.set_defaults(func=cmd_index_search)

    p = sub.add_parser("model", help="analytic model reports")
    msub = p.add_subparsers(dest="model_command", required=True)

    m = msub.add_parser("perf", help="run-time model")
    m.add_argument("--csv", type=Path, default=None)
    _add_config_flag(m)
    m.set_defaults(func=cmd_model_perf)

    m = msub.add_parser("bandwidth", help="report bandwidth model")
    m.add_argument("--reduction", nargs=2, type=int, default=None,
                   metavar=("GROUP", "BUDGET"))
    m.add_argument("--csv", type=Path, default=None)
    _add_config_flag(m)
    m.set_defaults(func=cmd_model_bandwidth)

    m = msub.add_parser("resources", help="resource and placement model")
    m.add_argument("dataset", type=Path, nargs="?", default=None)
    m.add_argument("--synthetic", nargs=2, type=int, default=None,
                   metavar=("N", "D"))
    m.add_argument("--capacity", type=int, default=None)
    m.add_argument("--csv", type=Path, default=None)
    _add_option_flags(m)
    _add_config_flag(m)
    m.set_defaults(func=cmd_model_resources)

    p = sub.add_parser("reproduce",
                       help="recompute a stored reference table")
    p.add_argument("table", choices=sorted(TABLES))
    p.add_argument("--csv", type=Path, default=None)
    _add_config_flag(p)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
