"""
Command-line front door for netcourse.

Exit codes: 0 success, 1 I/O or validation failure, 2 usage error,
3 a fit stopped at max cycles without converging (results still written).
"""

import argparse
import sys
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import pydantic
from loguru import logger

from netcourse import __version__
from netcourse.config import settings
from netcourse.evaluate import aggregate_replicates, confusion_metrics
from netcourse.exceptions import NetcourseError, ValidationError
from netcourse.harness import BenchmarkHarness, Perturbation
from netcourse.inference import fit
from netcourse.logging_setup import configure_logging
from netcourse.models import (
    ExpressionData,
    FitConfig,
    GGParams,
    ModelMode,
    RunManifest,
    Scenario,
    ScenarioSpec,
    StateMatrix,
)
from netcourse.network import (
    GeneNetwork,
    dump_edge_list,
    dump_pathways,
    load_edge_list,
    load_pathways,
    perturb_network,
    synthetic_pathway_network,
)
from netcourse.simulate import replicate_rng, simulate
from netcourse.storage import (
    RunStore,
    dump_aggregate,
    dump_expression,
    dump_key_values,
    dump_metrics,
    dump_states,
    file_digest,
    fit_parameters,
    load_expression,
    load_states,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3

MODE_CHOICES = ["full", "hmm", "hmrf", "temporal_only", "spatial_only"]


def _replicate_dir(k: int) -> str:
    return f"rep_{k:03d}"


def _theta(text: str) -> GGParams:
    try:
        alpha, alpha0, nu = (float(v) for v in text.split(","))
        return GGParams(alpha=alpha, alpha0=alpha0, nu=nu)
    except (ValueError, pydantic.ValidationError) as exc:
        raise argparse.ArgumentTypeError(f"expected three positive numbers a,a0,nu: {text}") from exc


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"{text} must be a positive integer")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"{text} must be a nonnegative integer")
    return value


def _read_network(edges: str, pathways: str | None = None) -> GeneNetwork:
    with open(edges, encoding="utf-8") as handle:
        net = load_edge_list(handle)
    if pathways:
        with open(pathways, encoding="utf-8") as handle:
            net = load_pathways(handle, net)
    return net


def _manifest(command: str, args: argparse.Namespace, inputs: Sequence[str | None], **extra: Any) -> RunManifest:
    """Manifest with the resolved settings, overridden by the command-line values."""
    config: dict[str, Any] = settings.model_dump(mode="json")
    config.update(
        (key, str(value) if isinstance(value, (Path, GGParams)) else value)
        for key, value in sorted(vars(args).items())
        if key not in {"handler"}
    )
    return RunManifest(
        command=command,
        config=config,
        input_digests={path: file_digest(path) for path in inputs if path},
        seed=getattr(args, "seed", None),
        version=__version__,
        **extra,
    )


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------


def _replicate_manifest(base: RunManifest, replicate: int) -> RunManifest:
    """Copy of the top-level manifest for one rep_XXX directory and its seed stream."""
    stream = {"entropy": base.seed, "spawn_key": [replicate]}
    return base.model_copy(
        update={"parameters": {**base.parameters, "replicate": replicate, "stream": stream}}
    )


def _simulate_one(task: tuple[ScenarioSpec, GeneNetwork, int, str, RunManifest | None]) -> None:
    spec, net, replicate, out, manifest = task
    data, truth = simulate(spec, net, replicate_rng(spec.seed, replicate))
    store = RunStore(out)
    store.write_text("expression.tsv", dump_expression(data))
    store.write_text("truth.tsv", dump_states(truth, data.gene_labels))
    store.write_text("metadata.tsv", dump_key_values({**spec.metadata(), "replicate": replicate}))
    if manifest is not None:
        store.write_manifest(manifest)


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = Scenario(args.scenario)
    net = _read_network(args.network, args.pathways)
    spec = ScenarioSpec(
        scenario=scenario,
        time_points=args.timepoints,
        replicates_per_condition=args.reps,
        theta=args.theta,
        p_init_de=args.p_init,
        p_de_given_de=args.p_stay,
        p_de_given_ee=args.p_enter,
        gamma0=args.gamma0,
        beta0=args.beta0,
        gibbs_sweeps=args.gibbs_sweeps,
        pathways_initially_de=args.init_pathways,
        p_path_de_given_de=args.path_stay,
        p_path_de_given_ee=args.path_enter,
        seed=args.seed,
    )
    store = RunStore(args.out)
    manifest = _manifest("simulate", args, [args.network, args.pathways])
    tasks: list[tuple[ScenarioSpec, GeneNetwork, int, str, RunManifest | None]]
    if args.replicates == 1:
        tasks = [(spec, net, 0, str(store.root), None)]
    else:
        tasks = [
            (spec, net, k, str(store.root / _replicate_dir(k)), _replicate_manifest(manifest, k))
            for k in range(args.replicates)
        ]
    _fan_out(_simulate_one, tasks, args.jobs)
    store.write_manifest(manifest)
    logger.success(f"[cli] Wrote {len(tasks)} simulated dataset(s) to {store.root}")
    return EXIT_OK


# ----------------------------------------------------------------------
# fit
# ----------------------------------------------------------------------


def align_network(net: GeneNetwork, data: ExpressionData) -> GeneNetwork:
    """
    Reorder the network to the expression gene order. Expression genes missing
    from the network join as isolated nodes; network genes without data are an error.
    """
    expressed = set(data.gene_labels)
    if not expressed & set(net.node_labels):
        raise ValidationError("no gene is shared between the network and the expression data")
    missing = sorted(set(net.node_labels) - expressed)
    if missing:
        preview = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise ValidationError(f"{len(missing)} network genes have no expression data: {preview}")
    return net.add_isolated_nodes(data.gene_labels).reindex(data.gene_labels)


def _fit_one(task: tuple[str, GeneNetwork, FitConfig, str, RunManifest | None]) -> dict[str, Any]:
    expr, net, config, out, manifest = task
    data = load_expression(expr)
    aligned = align_network(net, data)
    result = fit(data, aligned, config)
    store = RunStore(out)
    store.write_fit(result, data.gene_labels)
    parameters = fit_parameters(result)
    if manifest is not None:
        store.write_manifest(
            manifest.model_copy(update={"parameters": {**manifest.parameters, **parameters}})
        )
    return parameters


def cmd_fit(args: argparse.Namespace) -> int:
    config = FitConfig(
        epsilon=args.epsilon,
        max_cycles=args.max_cycles,
        ttest_alpha=args.ttest_alpha,
        mode=ModelMode.from_cli(args.mode),
        seed=args.seed,
    )
    net = _read_network(args.network)
    store = RunStore(args.out)
    tasks: list[tuple[str, GeneNetwork, FitConfig, str, RunManifest | None]]
    if args.replicates == 1:
        inputs = [args.expr]
        tasks = [(args.expr, net, config, str(store.root), None)]
    else:
        inputs = [str(Path(args.expr) / _replicate_dir(k) / "expression.tsv") for k in range(args.replicates)]
        tasks = [
            (
                inputs[k],
                net,
                config,
                str(store.root / _replicate_dir(k)),
                _manifest("fit", args, [args.network, inputs[k]], parameters={"replicate": k}),
            )
            for k in range(args.replicates)
        ]
    blocks = _fan_out(_fit_one, tasks, args.jobs)
    parameters = blocks[0] if len(blocks) == 1 else {_replicate_dir(k): b for k, b in enumerate(blocks)}
    store.write_manifest(_manifest("fit", args, [args.network, *inputs], parameters=parameters))
    if not all(block["converged"] for block in blocks):
        logger.warning("[cli] At least one fit stopped at max cycles")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# ----------------------------------------------------------------------
# eval / perturb / network / benchmark
# ----------------------------------------------------------------------


def _aligned_states(est: str, truth: str) -> tuple[StateMatrix, StateMatrix]:
    est_states, est_genes = load_states(est)
    true_states, true_genes = load_states(truth)
    if set(est_genes) != set(true_genes) or len(est_genes) != len(true_genes):
        unmatched = sorted(set(est_genes) ^ set(true_genes))
        raise ValidationError(f"gene sets differ between {est} and {truth}: {unmatched[:20]}")
    order = [true_genes.index(g) for g in est_genes]
    return est_states, StateMatrix(states=true_states.states[order])


def cmd_eval(args: argparse.Namespace) -> int:
    if len(args.est) != len(args.truth):
        raise ValidationError("--est and --truth must be given the same number of times")
    per_replicate = []
    for est, truth in zip(args.est, args.truth, strict=True):
        estimated, true = _aligned_states(est, truth)
        per_replicate.append(confusion_metrics(estimated, true))

    store = RunStore(args.out)
    store.write_text(
        "metrics.tsv",
        dump_metrics((k, row) for k, rows in enumerate(per_replicate) for row in rows),
    )
    store.write_text(
        "aggregate.tsv",
        dump_aggregate((args.method, args.scenario, s) for s in aggregate_replicates(per_replicate)),
    )
    store.write_manifest(_manifest("eval", args, [*args.est, *args.truth]))
    return EXIT_OK


def cmd_perturb(args: argparse.Namespace) -> int:
    net = _read_network(args.network)
    perturbed = perturb_network(net, args.del_frac, args.add_count, args.seed)
    out = Path(args.out)
    store = RunStore(out.parent if str(out.parent) else ".")
    store.write_text(out.name, dump_edge_list(perturbed))
    store.write_text(
        out.name + ".manifest.json",
        _manifest("perturb", args, [args.network]).model_dump_json(indent=2) + "\n",
    )
    logger.info(f"[cli] Perturbed network has {perturbed.edge_count} edges")
    return EXIT_OK


def cmd_network(args: argparse.Namespace) -> int:
    net = synthetic_pathway_network(
        n_genes=args.genes,
        n_edges=args.edges,
        n_pathways=args.pathways,
        shared_fraction=args.shared_fraction,
        seed=args.seed,
    )
    store = RunStore(args.out)
    store.write_text("network.tsv", dump_edge_list(net))
    store.write_text("pathways.tsv", dump_pathways(net))
    store.write_manifest(_manifest("network", args, []))
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    if args.network:
        net = _read_network(args.network, args.pathways)
    else:
        net = synthetic_pathway_network(seed=args.seed)
    specs = [ScenarioSpec(scenario=Scenario(name), seed=args.seed) for name in args.scenario]
    harness = BenchmarkHarness(
        network=net,
        specs=specs,
        replicates=args.replicates,
        seed=args.seed,
        modes=[ModelMode.from_cli(mode) for mode in args.modes],
        perturbations=[Perturbation.parse(text) for text in args.perturb],
        fit_config=FitConfig(epsilon=args.epsilon, max_cycles=args.max_cycles, seed=args.seed),
        jobs=args.jobs,
    )
    report = harness.run()

    store = RunStore(args.out)
    for outcome in report.outcomes:
        for method, rows in outcome.metrics.items():
            store.write_text(
                f"{outcome.scenario}/{method}/{_replicate_dir(outcome.replicate)}.tsv",
                dump_metrics((outcome.replicate, row) for row in rows),
            )
    store.write_text("aggregate.tsv", dump_aggregate(report.summaries))
    store.write_manifest(
        _manifest(
            "benchmark",
            args,
            [args.network, args.pathways],
            parameters={"min_score_gain": report.min_score_gain},
        )
    )
    return EXIT_OK


def _fan_out(worker: Any, tasks: list[Any], jobs: int) -> list[Any]:
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, tasks))


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netcourse", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"netcourse {__version__}")
    parser.add_argument("--log-level", default=settings.log_level)
    parser.add_argument("--log-file", action="store_true", help="also log to the configured log_dir")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labeled synthetic dataset")
    p.add_argument("--scenario", required=True, choices=[s.value for s in Scenario])
    p.add_argument("--network", required=True)
    p.add_argument("--pathways")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--timepoints", type=_positive_int, default=6)
    p.add_argument("--reps", type=_positive_int, default=3, help="replicates per condition")
    p.add_argument("--theta", type=_theta, default=GGParams(alpha=10.0, alpha0=0.9, nu=0.5))
    p.add_argument("--p-init", type=_probability, default=0.1)
    p.add_argument("--p-stay", type=_probability, default=0.7)
    p.add_argument("--p-enter", type=_probability, default=0.1)
    p.add_argument("--gamma0", type=float, default=-2.0)
    p.add_argument("--beta0", type=float, default=2.0)
    p.add_argument("--gibbs-sweeps", type=_nonnegative_int, default=settings.gibbs_sweeps)
    p.add_argument("--init-pathways", type=_nonnegative_int)
    p.add_argument("--path-stay", type=_probability, default=0.7)
    p.add_argument("--path-enter", type=_probability, default=0.1)
    p.add_argument("--replicates", type=_positive_int, default=1)
    p.add_argument("--jobs", type=_positive_int, default=settings.default_jobs)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("fit", help="estimate differential-expression states")
    p.add_argument("--expr", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--mode", choices=MODE_CHOICES, default="full")
    p.add_argument("--epsilon", type=float, default=settings.epsilon)
    p.add_argument("--max-cycles", type=_positive_int, default=settings.max_cycles)
    p.add_argument("--ttest-alpha", type=float, default=settings.ttest_alpha)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--replicates", type=_positive_int, default=1)
    p.add_argument("--jobs", type=_positive_int, default=settings.default_jobs)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("eval", help="compare estimated states with the truth")
    p.add_argument("--est", required=True, action="append")
    p.add_argument("--truth", required=True, action="append")
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="estimate")
    p.add_argument("--scenario", default="-")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("perturb", help="delete and add random edges")
    p.add_argument("--network", required=True)
    p.add_argument("--del-frac", type=float, default=0.0)
    p.add_argument("--add-count", type=int, default=0)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_perturb)

    p = sub.add_parser("network", help="write a synthetic overlapping-pathway network")
    p.add_argument("--genes", type=_positive_int, default=1668)
    p.add_argument("--edges", type=_positive_int, default=8011)
    p.add_argument("--pathways", type=_positive_int, default=33)
    p.add_argument("--shared-fraction", type=_probability, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_network)

    p = sub.add_parser("benchmark", help="replicate study over scenarios and model modes")
    p.add_argument("--network")
    p.add_argument("--pathways")
    p.add_argument("--scenario", action="append", choices=[s.value for s in Scenario])
    p.add_argument("--modes", nargs="+", choices=MODE_CHOICES, default=["full", "hmm", "hmrf"])
    p.add_argument("--perturb", action="append", default=[], help="kind:level, e.g. del_add:0.3")
    p.add_argument("--replicates", type=_positive_int, default=20)
    p.add_argument("--epsilon", type=float, default=settings.epsilon)
    p.add_argument("--max-cycles", type=_positive_int, default=settings.max_cycles)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=settings.default_jobs)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_benchmark)
    return parser


def _validate(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if args.command == "perturb":
        if not 0.0 <= args.del_frac <= 1.0:
            parser.error(f"--del-frac must be in [0, 1], got {args.del_frac}")
        if args.add_count < 0:
            parser.error("--add-count must be nonnegative")
    if args.command == "fit":
        if args.epsilon <= 0:
            parser.error("--epsilon must be positive")
        if not 0.0 < args.ttest_alpha < 1.0:
            parser.error("--ttest-alpha must be in (0, 1)")
    if args.command == "simulate" and args.scenario != Scenario.TEMPORAL.value and not args.pathways:
        parser.error(f"--pathways is required for the {args.scenario} scenario")
    if args.command == "benchmark":
        if not args.scenario:
            args.scenario = [s.value for s in Scenario]
        try:
            for text in args.perturb:
                Perturbation.parse(text)
        except (ValueError, pydantic.ValidationError):
            parser.error(f"--perturb expects kind:level with kind in del/add/del_add, got {args.perturb}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    configure_logging(args.log_level, to_file=args.log_file)

    try:
        return int(args.handler(args))
    except (NetcourseError, pydantic.ValidationError) as exc:
        logger.error(f"[cli] {exc}")
        return EXIT_FAILURE
    except OSError as exc:
        logger.error(f"[cli] I/O error: {exc}")
        return EXIT_FAILURE


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())
