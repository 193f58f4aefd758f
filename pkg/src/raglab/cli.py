"""Command-line surface: ingest, index build, eval run, serve, runs.

The CLI drives the same engine facade the HTTP service wraps, so an eval
launched here writes records byte-identical to a server eval job for the
same inputs. Config precedence is flag > config file > default; the
config file is JSON mirroring the server config. Exit codes: 0 success,
1 usage error, 2 runtime error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .chains import ChainSpec
from .engine import Engine, EngineConfig
from .errors import RagLabError
from .evals import EvalReport


def _load_config(config_path: str | None, root: str | None) -> EngineConfig:
    if config_path:
        config = EngineConfig.from_file(config_path)
    else:
        config = EngineConfig()
    if root:
        config.root = root
    return config


def _engine(ctx: click.Context) -> Engine:
    return Engine(_load_config(ctx.obj.get("config"), ctx.obj.get("root")))


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def fmt(row):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


@click.group()
@click.option("--config", "config_path", envvar="RAGLAB_CONFIG", default=None,
              help="Path to a JSON engine config file.")
@click.option("--root", envvar="RAGLAB_ROOT", default=None,
              help="Workspace root directory (overrides config file).")
@click.pass_context
def cli(ctx, config_path, root):
    """Development and evaluation engine for retrieval-augmented pipelines."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = config_path
    ctx.obj["root"] = root


@cli.command()
@click.option("--in", "input_path", required=True,
              help="Line-delimited passage file (JSONL or id/text/title TSV).")
@click.option("--corpus", "corpus_id", required=True, help="Corpus id to create.")
@click.pass_context
def ingest(ctx, input_path, corpus_id):
    """Ingest a passage file into a persisted corpus."""
    info = _engine(ctx).ingest(input_path, corpus_id)
    click.echo(f"ingested {info['size']} passages into corpus "
               f"'{info['corpus_id']}' at {info['path']}")


@cli.group()
def index():
    """Search index operations."""


@index.command("build")
@click.option("--kind", required=True,
              type=click.Choice(["bm25", "flat", "hnsw", "disk"]))
@click.option("--corpus", "corpus_id", required=True)
@click.option("--params", default="{}", help="Index parameters as JSON.")
@click.option("--id", "index_id", default="", help="Index id (default corpus.kind).")
@click.pass_context
def index_build(ctx, kind, corpus_id, params, index_id):
    """Build and persist an index over a corpus."""
    try:
        params_dict = json.loads(params)
    except json.JSONDecodeError as e:
        raise click.UsageError(f"--params is not valid JSON: {e}")
    info = _engine(ctx).build_index(corpus_id, kind, params_dict, index_id=index_id)
    click.echo(f"built {info['kind']} index '{info['index_id']}' at {info['path']}")


@cli.group()
def eval():
    """Evaluation runs."""


@eval.command("run")
@click.option("--chain", "chain_ref", required=True,
              help="Chain id or path to a chain JSON document.")
@click.option("--dataset", required=True, help="Dataset tag or file path.")
@click.option("--metrics", required=True, help="Comma-separated metric names.")
@click.option("--limit", type=int, default=None)
@click.option("--concurrency", type=int, default=None)
@click.option("--json", "as_json", is_flag=True,
              help="Emit the raw report record instead of a table.")
@click.pass_context
def eval_run(ctx, chain_ref, dataset, metrics, limit, concurrency, as_json):
    """Run a chain over a dataset and record metrics."""
    engine = _engine(ctx)
    if Path(chain_ref).exists():
        chain = ChainSpec.from_dict(json.loads(Path(chain_ref).read_text()))
        engine.save_chain(chain)
    else:
        chain = engine.get_chain(chain_ref)
    metric_names = [m for m in metrics.split(",") if m.strip()]
    report = engine.run_eval(chain, dataset, metric_names, limit=limit,
                             concurrency=concurrency)
    if as_json:
        payload = report.to_dict()
        payload["per_instance"] = report.per_instance
        click.echo(json.dumps(payload, ensure_ascii=False))
        return
    click.echo(_report_table(report))
    click.echo(f"\nrun {report.run_id} [{report.status}] over "
               f"{report.n_instances} instances")


def _report_table(report: EvalReport) -> str:
    rows = [[name, f"{mv.value:.4f}"] for name, mv in sorted(report.metrics.items())]
    rows.extend([name, f"{value:.4f}"] for name, value in sorted(report.latency.items()))
    return _table(["metric", "value"], rows)


@cli.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8470)
@click.option("--ui", "ui_dir", default=None,
              help="Directory with the built web UI to serve at /.")
@click.pass_context
def serve(ctx, host, port, ui_dir):
    """Start the HTTP API server (optionally serving the web UI)."""
    import uvicorn

    from .server.app import create_app

    app = create_app(_engine(ctx), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


@cli.group()
def runs():
    """Inspect and compare recorded runs."""


@runs.command("list")
@click.option("--dataset", "dataset_tag", default=None)
@click.option("--status", default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def runs_list(ctx, dataset_tag, status, as_json):
    """List runs, newest first."""
    records = _engine(ctx).tracker.list_runs(dataset_tag=dataset_tag, status=status)
    if as_json:
        click.echo(json.dumps([r.summary() for r in records], ensure_ascii=False))
        return
    rows = [[r.run_id, r.created_at, r.status, r.dataset_tag,
             str(len(r.metrics))] for r in records]
    click.echo(_table(["run_id", "created_at", "status", "dataset", "metrics"], rows))


@runs.command("compare")
@click.argument("run_ids", nargs=-1, required=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def runs_compare(ctx, run_ids, as_json):
    """Compare metrics across runs; best value per metric marked with *."""
    if len(run_ids) < 2:
        raise click.UsageError("compare needs at least two run ids")
    table = _engine(ctx).tracker.compare_runs(list(run_ids))
    if as_json:
        click.echo(json.dumps(table, ensure_ascii=False))
        return
    headers = ["metric"] + [rid[-8:] for rid in table["run_ids"]]
    rows = []
    for row in table["metrics"]:
        cells = [row["name"]]
        for rid in table["run_ids"]:
            value = row["values"].get(rid)
            cell = "-" if value is None else f"{value:.4f}"
            if rid == row["best"]:
                cell += " *"
            cells.append(cell)
        rows.append(cells)
    click.echo(_table(headers, rows))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.UsageError as e:
        e.show(file=sys.stderr)
        return 1
    except click.ClickException as e:
        e.show(file=sys.stderr)
        return 1
    except click.exceptions.Abort:
        return 1
    except RagLabError as e:
        click.echo(f"error: {e}", err=True)
        return 2
    except Exception as e:  # runtime failures exit 2, per contract
        click.echo(f"error: {e}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
