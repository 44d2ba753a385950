"""Command-line surface: evolve, eval, serve, lib, ingest, synth."""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import yaml

from .backends import Backend, BackendConfig, BackendError, build_backend
from .evolution import LoopConfig, judge_batch, run_loop, split
from .library import (
    LibraryError,
    LibraryStore,
    diff_states,
    render_entry,
)
from .preference import (
    ValidationError,
    accuracy_by_k,
    load_demonstrations,
    pairwise_accuracy,
    ranking_accuracy,
)


class CliError(click.ClickException):
    def show(self, file=None) -> None:
        click.echo(f"error: {self.message}", err=True)


def _fail_cleanly(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationError, LibraryError, BackendError, OSError,
                ValueError, KeyError) as exc:
            raise CliError(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


def _load_backend(backend_path: str | None, inline: dict | None = None) -> Backend:
    if backend_path:
        return build_backend(BackendConfig.from_file(Path(backend_path)))
    return build_backend(BackendConfig.from_dict(inline or {}))


@click.group()
def main() -> None:
    """Self-evolving reward system for instruction-guided image editing."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="YAML run configuration.")
@click.option("--seed", type=int, default=None, help="Override the split seed.")
@click.option("--budget", type=int, default=None, help="Override the iteration budget.")
@click.option("--resume", is_flag=True, help="Continue a partially completed run.")
@_fail_cleanly
def evolve(config_path: str, seed: int | None, budget: int | None, resume: bool) -> None:
    """Run the evolution loop from a config file."""
    cfg = yaml.safe_load(Path(config_path).read_text(encoding="utf-8")) or {}
    demos = load_demonstrations(
        Path(cfg["demos"]),
        Path(cfg["image_root"]) if cfg.get("image_root") else None,
    )
    calib = split(demos, seed if seed is not None else int(cfg.get("seed", 0)),
                  float(cfg.get("train_fraction", 0.6)))
    backend = _load_backend(None, cfg.get("backend"))
    loop_cfg = LoopConfig(**(cfg.get("loop") or {}))
    run_dir = Path(cfg["run_dir"]) if cfg.get("run_dir") else None
    store = LibraryStore(Path(cfg["library_root"]) if cfg.get("library_root") else None)
    trajectory, final = run_loop(
        calib,
        budget if budget is not None else int(cfg.get("budget", 40)),
        store, backend, backend, config=loop_cfg, run_dir=run_dir, resume=resume,
    )
    click.echo(f"baseline_accuracy {trajectory.baseline_accuracy:.3f}")
    for record in trajectory.records:
        click.echo(
            f"iter {record.iter:3d} phase={record.phase:7s} "
            f"val={record.val_accuracy:.3f} best={record.best_so_far:.3f} "
            f"accepted={str(record.accepted).lower()} "
            f"entries={sum(record.library_counts.values())}"
        )
    click.echo(f"final_version {trajectory.final_version}")
    click.echo(f"final_val_accuracy {trajectory.final_val_accuracy:.3f}")
    click.echo(f"final_entries {json.dumps(final.counts(), sort_keys=True)}")


@main.command("eval")
@click.option("--demos", "demos_path", required=True, type=click.Path(exists=True))
@click.option("--image-root", type=click.Path(exists=True), default=None)
@click.option("--library", "library_root", type=click.Path(), default=None,
              help="Library store directory; omit for the empty library.")
@click.option("--library-version", default=None, help="Version (or unique prefix) to judge under.")
@click.option("--backend", "backend_path", type=click.Path(exists=True), default=None)
@_fail_cleanly
def eval_cmd(demos_path: str, image_root: str | None, library_root: str | None,
             library_version: str | None, backend_path: str | None) -> None:
    """Judge a demonstration set and print ranking and pairwise accuracy."""
    demos = load_demonstrations(Path(demos_path),
                                Path(image_root) if image_root else None)
    store = LibraryStore(Path(library_root) if library_root else None)
    state = store.checkout(store.resolve(library_version)) if library_version else store.head()
    backend = _load_backend(backend_path)
    batch = judge_batch(demos, state, backend, backend, stage="eval")
    for demo_id, reason in batch.failures:
        click.echo(f"failed {demo_id}: {reason}", err=True)
    click.echo(f"ranking_accuracy {batch.accuracy:.3f}")
    for k, acc in sorted(accuracy_by_k(batch.records).items()):
        click.echo(f"ranking_accuracy_k{k} {acc:.3f}")
    pairwise = pairwise_accuracy(batch.records)
    click.echo(f"pairwise_accuracy {pairwise.accuracy:.3f} ({pairwise.pairs} pairs)")


@main.command()
@click.option("--library", "library_root", required=True, type=click.Path(exists=True))
@click.option("--library-version", default=None)
@click.option("--backend", "backend_path", type=click.Path(exists=True), default=None)
@click.option("--bind", default="127.0.0.1:8080", help="host:port to listen on.")
@_fail_cleanly
def serve(library_root: str, library_version: str | None,
          backend_path: str | None, bind: str) -> None:
    """Serve the reward endpoints over HTTP."""
    import uvicorn

    from .service import create_app

    store = LibraryStore(Path(library_root))
    version = store.resolve(library_version) if library_version else store.head().version
    backend = _load_backend(backend_path)
    app = create_app(store, backend, backend, library_version=version)
    host, _, port = bind.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="warning")


@main.group()
def lib() -> None:
    """Inspect and manage library versions."""


@lib.command("list")
@click.option("--library", "library_root", required=True, type=click.Path(exists=True))
@_fail_cleanly
def lib_list(library_root: str) -> None:
    store = LibraryStore(Path(library_root))
    head = store.head().version
    for version in store.list_versions():
        state = store.checkout(version)
        manifest = store.manifest(version)
        accuracy = manifest.get("val_accuracy")
        marker = "*" if version == head else " "
        click.echo(
            f"{marker} {version}  iter={manifest.get('iteration', 0):3d}  "
            f"skills={state.counts()['skills']} tools={state.counts()['tools']}  "
            f"val={'-' if accuracy is None else f'{accuracy:.3f}'}"
        )


@lib.command("show")
@click.option("--library", "library_root", required=True, type=click.Path(exists=True))
@click.argument("version")
@click.argument("name", required=False)
@_fail_cleanly
def lib_show(library_root: str, version: str, name: str | None) -> None:
    store = LibraryStore(Path(library_root))
    state = store.checkout(store.resolve(version))
    if name is None:
        for entry in state.active_entries():
            click.echo(f"{entry.kind:5s} {entry.name}: {entry.description}")
        return
    click.echo(render_entry(state.active(name)), nl=False)


@lib.command("diff")
@click.option("--library", "library_root", required=True, type=click.Path(exists=True))
@click.argument("old")
@click.argument("new")
@_fail_cleanly
def lib_diff(library_root: str, old: str, new: str) -> None:
    store = LibraryStore(Path(library_root))
    click.echo(diff_states(store.checkout(store.resolve(old)),
                           store.checkout(store.resolve(new))), nl=False)


@lib.command("checkout")
@click.option("--library", "library_root", required=True, type=click.Path(exists=True))
@click.argument("version")
@_fail_cleanly
def lib_checkout(library_root: str, version: str) -> None:
    store = LibraryStore(Path(library_root))
    state = store.rollback(store.resolve(version))
    click.echo(f"head {state.version}")


@main.command()
@click.option("--demos", "demos_path", required=True, type=click.Path(exists=True))
@click.option("--image-root", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@_fail_cleanly
def ingest(demos_path: str, image_root: str | None, out_path: str) -> None:
    """Validate a JSONL demonstration set into a calibration manifest."""
    root = Path(image_root) if image_root else None
    demos = load_demonstrations(Path(demos_path), root)
    k_histogram: dict[str, int] = {}
    for demo in demos:
        demo.require_ground_truth()
        demo.source_image.resolve(root)
        for candidate in demo.candidates:
            candidate.resolve(root)
        key = str(demo.num_candidates)
        k_histogram[key] = k_histogram.get(key, 0) + 1
    manifest = {
        "source": str(Path(demos_path)),
        "image_root": str(root) if root else None,
        "count": len(demos),
        "k_histogram": dict(sorted(k_histogram.items())),
        "ids": [d.id for d in demos],
    }
    Path(out_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    click.echo(f"ingested {len(demos)} demonstrations -> {out_path}")


@main.command()
@click.option("--n", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_fail_cleanly
def synth(n: int, seed: int, out_dir: str) -> None:
    """Materialize a synthetic demonstration set for desk-scale evolution."""
    from .synthetic import generate_demonstrations, write_demonstrations

    demos = generate_demonstrations(n, seed)
    jsonl = write_demonstrations(demos, Path(out_dir))
    click.echo(f"wrote {len(demos)} demonstrations -> {jsonl}")


if __name__ == "__main__":
    main()
