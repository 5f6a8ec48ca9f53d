"""``pbitsparse`` command line.

Every subcommand reads an optional JSON ``--config`` and accepts each
config field as a flag of the same name (``w0_grid`` -> ``--w0-grid``),
which takes precedence over the file.  Exit status: 0 on success, 2 for
configuration or input errors, 3 for capacity or oracle failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import __version__
from . import rng as _rng
from .analysis import NoOverlapError, boltzmann_exact, empirical, kl_divergence, reduced_empirical
from .experiments import (
    ConfigError,
    ExperimentConfig,
    meta_lines,
    parallel_map,
    run_experiment,
    write_table,
)
from .invlogic import InfeasibleError, WidthOverflowError
from .ising import (
    CapacityError,
    InstanceSpec,
    cut_values,
    energies,
    format_model,
    generate_er_maxcut,
    index_to_states,
    parse_model,
    state_to_string,
)
from .sampler import ColoringError, color_graph, sample, simulated_anneal, write_trajectory
from .sparsify import (
    DecodePolicy,
    InvalidBoundError,
    decode_many,
    degree_bound_for_copies,
    format_embedding,
    logical_model,
    parse_embedding,
    sparsify,
)

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY = 0, 2, 3
CAPACITY_ERRORS = (CapacityError, InvalidBoundError, WidthOverflowError, InfeasibleError,
                   NoOverlapError, ColoringError)

# subcommand -> forced kind (None: taken from the config, checked by the runner)
EXPERIMENTS = {
    "w0-sweep": None,
    "fss": "residual_fss",
    "factor": "factor",
    "cost-model": "cost_model",
}


def _list_parser(elem):
    def parse(text):
        try:
            return [elem(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {elem.__name__}s") from None
    return parse


def _add_config_flags(parser):
    parser.add_argument("--config", help="JSON config file")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        default = (f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default)
        if isinstance(default, bool):
            parser.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction,
                                default=argparse.SUPPRESS)
        elif isinstance(default, list):
            elem = float if any(isinstance(v, float) for v in default) else int
            parser.add_argument(flag, dest=f.name, type=_list_parser(elem), default=argparse.SUPPRESS,
                                metavar="V1,V2,...")
        else:
            typ = f.metadata.get("type", type(default))
            parser.add_argument(flag, dest=f.name, type=typ, default=argparse.SUPPRESS)


def build_parser():
    p = argparse.ArgumentParser(prog="pbitsparse", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "gen": "write an ER Max-Cut instance",
        "sparsify": "bound the degree of an instance with copy chains",
        "anneal": "simulated annealing trials on an instance or embedding",
        "sample": "fixed-beta sampling; writes the (decoded) state distribution",
        "w0-sweep": "full-adder KL or Max-Cut success across a W0 grid",
        "fss": "residual-energy curves and finite-size-scaling collapse",
        "factor": "factor a semiprime with an invertible multiplier",
        "cost-model": "cycles per sweep for all-to-all and sparse hardware",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        _add_config_flags(sp)
        if name == "anneal":
            sp.add_argument("--trajectory", help="CSV trajectory of trial 0")
    return p


def _config(args):
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "trajectory")}
    forced = EXPERIMENTS.get(args.command)
    if forced:
        overrides["kind"] = forced
    return ExperimentConfig.load(args.config, overrides)


def _read_problem(path):
    """Model or embedding file -> ``(model, embedding or None)``."""
    if path is None:
        raise ConfigError("--input is required")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if any(line.startswith("copy ") for line in text.splitlines()):
        emb = parse_embedding(text)
        return emb.physical, emb
    return parse_model(text)[0], None


def _comment(config):
    return "\n".join("meta " + m for m in meta_lines(config))


def cmd_gen(config):
    model = generate_er_maxcut(InstanceSpec(config.n, config.edge_probability, config.instance_seed))
    Path(config.output).write_text(format_model(model, _comment(config)))
    return [config.output]


def cmd_sparsify(config):
    dense, emb = _read_problem(config.input)
    if emb is not None:
        raise ConfigError("input is already sparsified")
    k = config.k or degree_bound_for_copies(dense.max_degree(), config.copies)
    emb = sparsify(dense, k, config.w0)
    header = "".join(f"# {line}\n" for line in _comment(config).splitlines())
    Path(config.output).write_text(header + format_embedding(emb))
    return [config.output]


def cmd_anneal(config, trajectory=None):
    model, emb = _read_problem(config.input)
    logical = logical_model(emb) if emb is not None else model
    plan = color_graph(model) if emb is not None else None
    sched = config.schedule()

    def trial(t):
        stride = max(1, sched.sweeps_per_beta // 10) if (trajectory and t == 0) else None
        res = simulated_anneal(model, sched, _rng.Streams(_rng.derive_seed(config.seed, 1, t)),
                               plan=plan, trajectory_stride=stride)
        state = res.best_state[None, :]
        if emb is not None:
            pol = DecodePolicy.for_copies(len(emb.copy_map[0]), _rng.derive_seed(config.seed, 2, t))
            state = decode_many(emb, state, pol)
        e = float(energies(logical, state)[0])
        return e, float(cut_values(logical, state)[0]), state_to_string(state[0]), res.trajectory

    out = parallel_map(trial, range(config.trials), config.workers)
    rows = [(t, e, c, s) for t, (e, c, s, _) in enumerate(out)]
    paths = [write_table(config.output, config, ["trial", "energy", "cut", "state"], rows)]
    if trajectory:
        write_trajectory(trajectory, out[0][3])
        paths.append(trajectory)
    return paths


def cmd_sample(config):
    model, emb = _read_problem(config.input)
    st = _rng.Streams(_rng.derive_seed(config.seed, 1, 0))
    samples = sample(model, config.beta, config.sweeps, st, burn_in=config.burn_in)
    if emb is not None:
        pol = DecodePolicy.for_copies(len(emb.copy_map[0]), _rng.derive_seed(config.seed, 2, 0))
        dist = reduced_empirical(samples, emb, pol)
        logical = logical_model(emb)
    else:
        dist = empirical(samples)
        logical = model
    exact = boltzmann_exact(logical, config.beta) if logical.n <= 20 else None
    rows = []
    for idx, p in enumerate(dist.probs):
        ref = exact.probs[idx] if exact is not None else float("nan")
        rows.append((state_to_string(index_to_states(idx, dist.n)), p, ref))
    path = write_table(config.output, config, ["state", "probability", "exact_probability"], rows)
    if exact is not None:
        print(f"kl={kl_divergence(dist, exact)!r}")
    return [path]


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = _config(args)
        if args.command == "gen":
            paths = cmd_gen(config)
        elif args.command == "sparsify":
            paths = cmd_sparsify(config)
        elif args.command == "anneal":
            paths = cmd_anneal(config, args.trajectory)
        elif args.command == "sample":
            paths = cmd_sample(config)
        else:
            paths = run_experiment(config)
    except CAPACITY_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
