"""Command-line entry points.

Thin wrappers: offline subcommands call straight into the package, ``serve``
hands off to uvicorn. Exit codes: 0 success, 1 input error, 2 internal fault.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .analysis import InputError, export_report, gaze_accuracy
from .assembly import PlanError, load_plan_file
from .config import DEFAULT_HTTP_PORT, DEFAULT_TCP_PORT, load_config
from .engine import replay as replay_trace
from .engine import run_sim
from .gaze import GazeSample
from .protocol import MessageType, ProtocolError, TraceReader
from .sim import ScriptError


@click.group()
def cli():
    """Gaze-driven part fetching: simulate, serve, replay, analyze."""


@cli.command("run-sim")
@click.option("--plan", default="gear_assembly", show_default=True, help="Built-in plan name or plan file path.")
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--script", default="fetch4", show_default=True, help="Built-in script name or script file path.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True), help="Service config JSON (engine section is used).")
@click.option("--out", default="run_out", show_default=True, type=click.Path(), help="Output directory for trace/eventlog/metrics.")
def run_sim_cmd(plan, seed, script, config_path, out):
    """Run one scripted simulated session end to end."""
    engine_config = load_config(config_path).engine
    result = run_sim(plan, seed, script, out, engine_config)
    click.echo(f"trace:    {result.trace_path}")
    click.echo(f"eventlog: {result.eventlog_path}")
    click.echo(f"metrics:  {result.metrics_path}")
    click.echo(json.dumps(result.metrics.to_dict(), indent=2, sort_keys=True))
    if result.failure is not None:
        raise click.ClickException(f"session incomplete: {result.failure}")


@cli.command("serve")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--host", default=None)
@click.option("--port", default=None, type=int, help=f"HTTP/WebSocket port (default {DEFAULT_HTTP_PORT}).")
@click.option("--tcp-port", default=None, type=int, help=f"Raw stream socket port (default {DEFAULT_TCP_PORT}).")
@click.option("--plan", default=None)
@click.option("--seed", default=None, type=int)
@click.option("--trace", default="gear_trace.jsonl", show_default=True, help="Trace file for the live session.")
def serve_cmd(config_path, host, port, tcp_port, plan, seed, trace):
    """Run the live gateway (REST + WebSocket /gear + raw socket)."""
    import uvicorn

    from .service import create_app

    config = load_config(config_path)
    overrides = {}
    if host is not None:
        overrides["host"] = host
    if port is not None:
        overrides["http_port"] = port
    if tcp_port is not None:
        overrides["tcp_port"] = tcp_port
    if plan is not None:
        overrides["plan"] = plan
    if seed is not None:
        overrides["seed"] = seed
    overrides["trace_path"] = trace
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.http_port, log_level="info")


@cli.command("replay")
@click.argument("trace", type=click.Path(exists=True))
@click.option("--speed", default=0.0, show_default=True, type=float, help="0 replays as fast as possible.")
@click.option("--out", default=None, type=click.Path(), help="Write the regenerated event log here.")
def replay_cmd(trace, speed, out):
    """Re-drive a recorded trace and report its session metrics."""
    result = replay_trace(trace, speed)
    if out is not None:
        Path(out).write_text(result.log.to_jsonl(), encoding="utf-8")
        click.echo(f"eventlog: {out}")
    click.echo(json.dumps(result.metrics.to_dict(), indent=2, sort_keys=True))
    if result.truncated:
        click.echo("note: trace was truncated; metrics are partial", err=True)


@cli.command("analyze-gaze")
@click.argument("trace", type=click.Path(exists=True))
@click.option("--target", required=True, help="Part label whose box anchors the analysis.")
@click.option("--discard", default=10, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path())
@click.option("--format", "fmt", default="jsonl", show_default=True, type=click.Choice(["jsonl", "csv"]))
def analyze_gaze_cmd(trace, target, discard, out, fmt):
    """Gaze-accuracy report for a recorded trace against one target part."""
    samples: list[GazeSample] = []
    target_box = None
    frame_size = (1920, 1080)
    for record in TraceReader(trace):
        message = record.message
        if message.type is MessageType.GAZE_SAMPLE:
            payload = message.payload
            samples.append(
                GazeSample(
                    int(payload["timestamp_us"]),
                    float(payload["x"]),
                    float(payload["y"]),
                    bool(payload.get("valid", True)),
                )
            )
        elif message.type is MessageType.DETECTION_FRAME and target_box is None:
            if message.payload.get("source") == "USER":
                for box in message.payload.get("boxes", []):
                    if box["label"] == target:
                        from .perception import BBox

                        target_box = BBox.from_dict(box)
                        frame_size = (
                            int(message.payload["frame_width"]),
                            int(message.payload["frame_height"]),
                        )
                        break
    if target_box is None:
        raise InputError(f"target {target!r} never appears in a USER detection frame")
    report = gaze_accuracy(
        samples,
        target_box,
        discard_n=discard,
        frame_width=frame_size[0],
        frame_height=frame_size[1],
    )
    text = export_report(report, fmt)
    if out is None:
        out = f"gaze_report.{fmt}"
    Path(out).write_text(text, encoding="utf-8")
    click.echo(f"report: {out}")
    click.echo(
        f"n={report.n_used} median={report.median_px:.2f}px "
        f"frac_within_max_corner={report.frac_within_max_corner:.4f}"
    )


@cli.command("metrics")
@click.argument("trace", type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path())
@click.option("--format", "fmt", default="jsonl", show_default=True, type=click.Choice(["jsonl", "csv"]))
def metrics_cmd(trace, out, fmt):
    """Session metrics recomputed from a trace (via replay)."""
    result = replay_trace(trace)
    text = export_report(result.metrics, fmt)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"report: {out}")
    click.echo(json.dumps(result.metrics.to_dict(), indent=2, sort_keys=True))


@cli.command("validate-plan")
@click.argument("plan_file", type=click.Path(exists=True))
def validate_plan_cmd(plan_file):
    """Check a plan document; names the offending step on failure."""
    plan = load_plan_file(plan_file)
    click.echo(
        f"plan {plan.plan_id!r} ok: {len(plan)} steps, "
        f"order {' -> '.join(plan.topological_order)}"
    )


INPUT_ERRORS = (
    PlanError,
    ScriptError,
    ProtocolError,
    InputError,
    FileNotFoundError,
    json.JSONDecodeError,
)


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except INPUT_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # internal fault
        click.echo(f"internal fault: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
