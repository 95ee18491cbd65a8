"""Command-line entry point: codegen, decode, train, transfer, simulate,
sweep and report subcommands.

Every subcommand is a thin shell over the library; any option may also come
from a JSON config file (``--config``), with explicit command-line flags
taking precedence and unknown config keys rejected.  Exit codes: 2 for a
malformed config or bad option values, 3 for an invariant violation during a
run, 4 for I/O errors.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .decoders import VARIANTS, DecoderPipeline
from .pauli import write_check_matrix
from .simulate import (InvariantViolation, SimConfig, SweepConfig,
                       report as make_report, rows_to_csv, run_point, sweep)
from .toric import build_edge_classes, build_toric
from .training import TrainConfig, TrainingDiverged, train
from .weights import WeightFileError, load_weights, save_weights, transfer

EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_IO = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (InvariantViolation, TrainingDiverged) as exc:
            _fail(EXIT_INVARIANT, str(exc))
        except (ValueError, WeightFileError) as exc:
            _fail(EXIT_CONFIG, str(exc))
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
    return wrapper


def _merged(ctx: click.Context, config: str | None, values: dict) -> dict:
    """Overlay config-file values under explicit command-line flags."""
    if config is None:
        return values
    try:
        data = json.loads(Path(config).read_text())
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        _fail(EXIT_CONFIG, f"config is not valid JSON: {exc}")
    if not isinstance(data, dict):
        _fail(EXIT_CONFIG, "config must be a JSON object")
    unknown = sorted(set(data) - set(values))
    if unknown:
        _fail(EXIT_CONFIG, f"unknown config keys: {', '.join(unknown)}")
    from click.core import ParameterSource

    for key, value in data.items():
        if ctx.get_parameter_source(key) != ParameterSource.COMMANDLINE:
            values[key] = tuple(value) if isinstance(value, list) else value
    return values


def _require(values: dict, *names: str):
    """Options that may come from either a flag or the config file."""
    missing = [n for n in names if not values.get(n)]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        _fail(EXIT_CONFIG, f"missing required option(s): {flags}")


def syndrome_to_hex(bits: np.ndarray) -> str:
    """Pack syndrome bits into hex; bit j of the integer is row j."""
    value = 0
    for j, b in enumerate(np.asarray(bits).astype(int)):
        value |= (b & 1) << j
    return format(value, "x")


def hex_to_syndrome(hex_str: str, m: int) -> np.ndarray:
    value = int(hex_str, 16)
    if value >> m:
        raise ValueError(f"syndrome {hex_str!r} has bits beyond row {m - 1}")
    return np.array([(value >> j) & 1 for j in range(m)], dtype=np.uint8)


@click.group()
def main():
    """Toric-code decoding toolkit: two-stage (neural) belief propagation
    with exact minimum-weight matching fallback."""


_config_opt = click.option("--config", type=click.Path(), default=None,
                           help="JSON file of option values; flags override.")


@main.command()
@click.option("--d", type=int, default=None, help="Lattice size (>= 2).")
@click.option("--out-dir", type=click.Path(), default=".",
              help="Directory for the emitted files.")
@_config_opt
@click.pass_context
@_handle_errors
def codegen(ctx, **kw):
    """Emit check matrices (sparse text) and the edge-class map (CSV)."""
    kw = _merged(ctx, kw.pop("config"), kw)
    _require(kw, "d")
    code = build_toric(kw["d"])
    classes = build_edge_classes(code)
    out = Path(kw["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "h_std.txt", "w") as f:
        write_check_matrix(code.h_std, f)
    with open(out / "h_oc.txt", "w") as f:
        write_check_matrix(code.h_oc, f)
    with open(out / "edge_classes.csv", "w") as f:
        f.write("check_row,qubit,class_id\n")
        k = 0
        for j, row in enumerate(code.h_oc.rows):
            for q, _ in row:
                f.write(f"{j},{q},{classes.per_edge[k]}\n")
                k += 1
    click.echo(f"wrote h_std.txt, h_oc.txt, edge_classes.csv to {out}")


@main.command()
@click.option("--d", type=int, default=None)
@click.option("--epsilon", type=float, default=0.05,
              help="Physical error rate assumed by the decoder.")
@click.option("--syndrome", "syndrome_hex", type=str, default=None,
              help="Standard syndrome as hex; bit j of the value is row j "
                   "(vertex rows first, then plaquette rows).")
@click.option("--weights", "weights_path", type=click.Path(), default=None,
              help="Weight file for a neural first stage.")
@click.option("--second-stage", type=click.Choice(["matching", "none"]),
              default="matching")
@click.option("--weights-source", type=click.Choice(["posterior", "prior"]),
              default="posterior",
              help="Edge weights of the matching graphs.")
@click.option("--max-iterations", type=int, default=None)
@_config_opt
@click.pass_context
@_handle_errors
def decode(ctx, **kw):
    """Decode one syndrome; prints the correction, convergence flag and
    iteration count."""
    kw = _merged(ctx, kw.pop("config"), kw)
    _require(kw, "d")
    if kw["syndrome_hex"] is None:
        _fail(EXIT_CONFIG, "missing required option(s): --syndrome")
    code = build_toric(kw["d"])
    s_std = hex_to_syndrome(kw["syndrome_hex"], code.h_std.m)
    ws = load_weights(kw["weights_path"]) if kw["weights_path"] else None
    if ws is None:
        base = "bp"
    else:
        base = {("conv", "overcomplete"): "conv-rnbp",
                ("dense", "overcomplete"): "rnbp",
                ("dense", "standard"): "nbp"}.get((ws.kind, ws.matrix))
        if base is None:
            raise ValueError(f"no decoder variant for {ws.kind} weights on "
                             f"the {ws.matrix} matrix")
    variant = base + ("+match" if kw["second_stage"] == "matching" else "")
    pipeline = DecoderPipeline(code, kw["epsilon"], variant, weights=ws,
                               max_iterations=kw["max_iterations"],
                               stage2_weights=kw["weights_source"])
    correction, converged, iterations, stage2 = pipeline.decode_one(s_std)
    from .pauli import PauliVector

    click.echo(f"correction={PauliVector.from_codes(correction)}")
    click.echo(f"converged={str(converged).lower()}")
    click.echo(f"iterations={iterations}")
    click.echo(f"stage2={str(stage2).lower()}")


@main.command(name="train")
@click.option("--d", type=int, default=None)
@click.option("--matrix", type=click.Choice(["standard", "overcomplete"]),
              default="overcomplete")
@click.option("--kind", type=click.Choice(["conv", "dense"]), default="conv")
@click.option("--iterations", type=int, default=8)
@click.option("--steps", type=int, default=2000)
@click.option("--batch-size", type=int, default=64)
@click.option("--learning-rate", type=float, default=0.01)
@click.option("--epsilon-train", type=float, multiple=True, default=(0.1,),
              help="Training error rate; repeat the flag for a mixture.")
@click.option("--grad-clip", type=float, default=10.0)
@click.option("--seed", type=int, default=0)
@click.option("--loss-variant",
              type=click.Choice(["syndrome", "multi_iteration",
                                 "final_iteration", "ce+syndrome"]),
              default="syndrome")
@click.option("--syndrome-weight", type=float, default=1.0,
              help="Penalty scale for the ce+syndrome loss.")
@click.option("--share-iterations", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Weight file to write.")
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Optional JSON loss report.")
@_config_opt
@click.pass_context
@_handle_errors
def train_cmd(ctx, **kw):
    """Train message weights on errors sampled on the fly."""
    kw = _merged(ctx, kw.pop("config"), kw)
    _require(kw, "d", "out_path")
    eps = kw["epsilon_train"]
    cfg = TrainConfig(
        batch_size=kw["batch_size"], steps=kw["steps"],
        learning_rate=kw["learning_rate"],
        epsilon_train=eps[0] if len(eps) == 1 else tuple(eps),
        grad_clip=kw["grad_clip"], seed=kw["seed"],
        loss_variant=kw["loss_variant"],
        syndrome_weight=kw["syndrome_weight"], kind=kw["kind"],
        iterations=kw["iterations"], share_iterations=kw["share_iterations"])
    code = build_toric(kw["d"])
    ws, loss_report = train(code, kw["matrix"], cfg)
    save_weights(ws, kw["out_path"])
    if kw["report_path"]:
        Path(kw["report_path"]).write_text(json.dumps({
            "losses": loss_report.losses,
            "final_checksum": loss_report.final_checksum,
            "config": loss_report.config,
        }, indent=1))
    first = loss_report.losses[0] if loss_report.losses else float("nan")
    last = loss_report.losses[-1] if loss_report.losses else float("nan")
    click.echo(f"trained {cfg.kind} weights for d={kw['d']} "
               f"({cfg.steps} steps, loss {first:.4f} -> {last:.4f}); "
               f"wrote {kw['out_path']}")


@main.command()
@click.option("--weights", "weights_path", type=click.Path(), default=None)
@click.option("--target-d", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@_config_opt
@click.pass_context
@_handle_errors
def transfer_cmd(ctx, **kw):
    """Re-bind convolutional weights to another lattice size."""
    kw = _merged(ctx, kw.pop("config"), kw)
    _require(kw, "weights_path", "target_d", "out_path")
    ws = load_weights(kw["weights_path"])
    target = build_toric(kw["target_d"])
    save_weights(transfer(ws, target), kw["out_path"])
    click.echo(f"transferred d={ws.distance} -> d={kw['target_d']}: "
               f"{kw['out_path']}")


def _sim_options(fn):
    for deco in reversed([
        click.option("--seed", type=int, default=0),
        click.option("--target-failures", type=int, default=100),
        click.option("--max-shots", type=int, default=10_000_000),
        click.option("--batch-size", type=int, default=1000),
        click.option("--weights", "weights_path", type=click.Path(),
                     default=None),
        click.option("--max-iterations", type=int, default=None),
        click.option("--workers", type=int, default=None,
                     help="Monte Carlo worker processes (default: all "
                          "cores); results are independent of this."),
    ]):
        fn = deco(fn)
    return fn


@main.command()
@click.option("--d", type=int, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--variant", type=click.Choice(VARIANTS), default=None)
@_sim_options
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the CSV here instead of stdout.")
@_config_opt
@click.pass_context
@_handle_errors
def simulate(ctx, **kw):
    """Estimate the logical error rate of one (d, epsilon, variant) point."""
    kw = _merged(ctx, kw.pop("config"), kw)
    _require(kw, "d", "variant")
    if kw["epsilon"] is None:
        _fail(EXIT_CONFIG, "missing required option(s): --epsilon")
    ws = load_weights(kw["weights_path"]) if kw["weights_path"] else None
    cfg = SimConfig(
        d=kw["d"], epsilon=kw["epsilon"], variant=kw["variant"],
        target_failures=kw["target_failures"], max_shots=kw["max_shots"],
        seed=kw["seed"], weights=ws,
        weights_file=kw["weights_path"] or "",
        max_iterations=kw["max_iterations"], batch_size=kw["batch_size"])
    stats = run_point(cfg, workers=kw["workers"] or os.cpu_count() or 1)
    text = rows_to_csv([{k: str(v) for k, v in stats.csv_row().items()}])
    if kw["out_path"]:
        Path(kw["out_path"]).write_text(text)
        _echo_config(kw["out_path"], kw)
    else:
        click.echo(text, nl=False)


@main.command(name="sweep")
@click.option("--d", "ds", type=int, multiple=True)
@click.option("--epsilon", "epsilons", type=float, multiple=True)
@click.option("--variant", "variants", type=click.Choice(VARIANTS),
              multiple=True)
@_sim_options
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--no-resume", is_flag=True, default=False,
              help="Recompute every grid point even if rows exist.")
@_config_opt
@click.pass_context
@_handle_errors
def sweep_cmd(ctx, **kw):
    """Run a (d, epsilon, variant) grid; one CSV row per point, resumable."""
    kw = _merged(ctx, kw.pop("config"), kw)
    _require(kw, "ds", "epsilons", "variants", "out_path")
    cfg = SweepConfig(
        ds=tuple(kw["ds"]), epsilons=tuple(kw["epsilons"]),
        variants=tuple(kw["variants"]),
        target_failures=kw["target_failures"], max_shots=kw["max_shots"],
        seed=kw["seed"], weights_file=kw["weights_path"] or "",
        max_iterations=kw["max_iterations"], batch_size=kw["batch_size"])
    rows = sweep(cfg, kw["out_path"],
                 workers=kw["workers"] or os.cpu_count() or 1,
                 resume=not kw["no_resume"])
    _echo_config(kw["out_path"], kw)
    click.echo(f"wrote {len(rows)} rows to {kw['out_path']}")


def _echo_config(out_path, kw):
    echo = {k: (list(v) if isinstance(v, tuple) else v)
            for k, v in sorted(kw.items())}
    Path(str(out_path) + ".config.json").write_text(json.dumps(echo, indent=1))


@main.command(name="report")
@click.argument("csvs", nargs=-1, required=True, type=click.Path())
@click.option("--out-dir", type=click.Path(), required=True)
@_handle_errors
def report_cmd(csvs, out_dir):
    """Merge sweep CSVs into per-figure plot-data files."""
    info = make_report(csvs, out_dir)
    click.echo(f"merged {info['rows']} rows into {', '.join(info['files'])} "
               f"in {out_dir}")


if __name__ == "__main__":
    main()
