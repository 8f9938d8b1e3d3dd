"""``skillbank`` command line: ingest, query, synth, plan, stats.

Exit codes: 0 ok, 1 usage or configuration, 2 no match, 3 data error,
4 model response error.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import click

from .errors import ConfigError, InvalidRecord, SkillbankError
from .modelgw import DEFAULT_DIM, Gateway

log = logging.getLogger("skillbank")


@dataclass(frozen=True)
class Config:
    repo: str | None = None
    fixtures: str | None = None
    gateway_url: str | None = None
    embed_url: str | None = None
    model: str | None = None
    lexicon: str | None = None
    theta: float = 0.8
    eps_motion: float = 0.005
    inactive_frac: float = 0.5
    grid_rows: int = 5
    grid_cols: int = 5
    embedding_dim: int = DEFAULT_DIM

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if self.eps_motion <= 0:
            raise ConfigError(f"eps_motion must be positive, got {self.eps_motion}")
        if not 0 < self.inactive_frac <= 1:
            raise ConfigError(f"inactive_frac must lie in (0, 1], got {self.inactive_frac}")
        if not 2 <= self.grid_rows <= 26 or self.grid_cols < 2:
            raise ConfigError("grid needs 2..26 rows and at least 2 columns")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be positive")


def load_config(path) -> Config:
    """Config file values; unknown keys are rejected."""
    if path is None:
        return Config()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(Config)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s) {', '.join(unknown)}")
    base = Path(path).parent
    for key in ("repo", "fixtures", "lexicon"):
        if data.get(key):
            data[key] = str(base / data[key])
    try:
        return Config(**data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


class App:
    """Per-invocation state shared by the subcommands."""

    def __init__(self, config: Config):
        self.config = config

    def repo_path(self, override=None) -> Path:
        path = override or self.config.repo
        if not path:
            raise ConfigError("no repository given (use --repo, SKILLBANK_REPO or the config file)")
        return Path(path)

    def load_repo(self, override=None):
        from .store import load_repo

        path = self.repo_path(override)
        if not (path / "manifest.json").exists():
            raise ConfigError(f"no repository at {path}")
        return load_repo(path)

    def gateway(self, dim=None) -> Gateway:
        dim = dim or self.config.embedding_dim
        if self.config.fixtures:
            return Gateway.fixture(self.config.fixtures, dim)
        env = dict(os.environ)
        for key, value in (
            ("MODELGW_URL", self.config.gateway_url),
            ("MODELGW_EMBED_URL", self.config.embed_url),
            ("MODELGW_MODEL", self.config.model),
        ):
            if value and key not in env:
                env[key] = value
        return Gateway.from_env(dim, env=env)

    def lexicon(self):
        from .skillparse import VerbLexicon, bundled_lexicon

        if not self.config.lexicon:
            return bundled_lexicon()
        try:
            return VerbLexicon.load(self.config.lexicon)
        except OSError as exc:
            raise ConfigError(f"cannot read lexicon {self.config.lexicon}: {exc}") from exc

    def thresholds(self) -> dict:
        c = self.config
        return {"theta": c.theta, "eps_motion": c.eps_motion, "inactive_frac": c.inactive_frac}


class SkillbankGroup(click.Group):
    """Maps library errors and usage errors onto the exit-code contract."""

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as exc:
            exc.exit_code = 1
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as exc:
            exc.exit_code = 1
            raise
        except SkillbankError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(exc.exit_code)


def _emit(data, as_json: bool, human) -> None:
    if as_json:
        click.echo(json.dumps(data, sort_keys=True, indent=1))
    else:
        human()


json_option = click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")


@click.group(cls=SkillbankGroup, context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file.")
@click.option("--repo", envvar="SKILLBANK_REPO", help="Repository directory.")
@click.option("--fixtures", type=click.Path(dir_okay=False), help="Answer model calls from this fixture file.")
@click.option("--theta", type=float, help="Description similarity threshold.")
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
@click.version_option(package_name="artifact")
@click.pass_context
def cli(ctx, config_path, repo, fixtures, theta, verbose):
    """Skill repository tools."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    config = load_config(config_path)
    overrides = {k: v for k, v in (("repo", repo), ("fixtures", fixtures), ("theta", theta)) if v is not None}
    ctx.obj = App(replace(config, **overrides))


@cli.command()
@click.argument("manifest_dir", type=click.Path(file_okay=False))
@click.option("--out", "out", help="Repository to create or extend (defaults to --repo).")
@click.option("--library", type=click.Path(dir_okay=False), required=True, help="Base skill library JSON.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--templates", type=click.IntRange(1, 3), default=3, show_default=True, help="Extractor prompt templates.")
@json_option
@click.pass_obj
def ingest(app: App, manifest_dir, out, library, jobs, templates, as_json):
    """Annotate every video manifest in MANIFEST_DIR and file its slices."""
    from . import prompts
    from .ingest import ingest_videos
    from .plan import SkillLibrary
    from .store import Repository, load_repo, save_repo

    manifests = sorted(Path(manifest_dir).glob("*.json"))
    if not manifests:
        raise ConfigError(f"no videos found in {manifest_dir}")
    path = app.repo_path(out)
    repo = load_repo(path) if (path / "manifest.json").exists() else None
    gw = app.gateway(repo.tree.embedding_dim if repo else None)
    if repo is None:
        repo = Repository.empty(gw.dim)
    repo, report = ingest_videos(
        manifests,
        SkillLibrary.load(library),
        gw,
        app.lexicon(),
        app.config.theta,
        prompts.extractor_templates(templates),
        repo,
        jobs,
    )
    if report.failures and not report.slices_per_video:
        for m, e in report.failures:
            click.echo(f"failed: {m}: {e}", err=True)
        raise InvalidRecord(f"all {len(manifests)} videos failed")
    save_repo(repo, path)

    def human():
        for vid, n in sorted(report.slices_per_video.items()):
            click.echo(f"{vid}: {n} slices")
        for s, r in report.dropped:
            click.echo(f"dropped {s}: {r}")
        for m, e in report.failures:
            click.echo(f"failed {m}: {e}")
        _print_stats(report.stats.to_dict())
        click.echo(f"repository written to {path}")

    _emit(report.to_dict(), as_json, human)


@cli.command()
@click.argument("signature")
@click.option("--scene", type=click.Path(exists=True, dir_okay=False), required=True, help="Scene image.")
@click.option("-k", type=click.IntRange(min=1), default=3, show_default=True)
@json_option
@click.pass_obj
def query(app: App, signature, scene, k, as_json):
    """Rank stored slices for SIGNATURE against a scene image."""
    from .retrieve import RetrievalQuery, retrieve_detailed
    from .skillparse import parse_signature

    repo = app.load_repo()
    gw = app.gateway(repo.tree.embedding_dim)
    q = RetrievalQuery(parse_signature(signature), gw.embed(Path(scene)))
    t = app.thresholds()
    outcome = retrieve_detailed(repo, q, app.lexicon(), gw, k, t["theta"], t["eps_motion"], t["inactive_frac"])
    chosen = {c.slice_id for c in outcome.selected}
    rows = [dict(c.to_dict(), selected=c.slice_id in chosen) for c in outcome.candidates]

    def human():
        width = max(len(r["slice_id"]) for r in rows)
        click.echo(f"{'slice_id':<{width}}  score    flags")
        for r in rows:
            flags = ",".join(f for f, on in r["filter_flags"].items() if on) or "-"
            mark = "*" if r["selected"] else " "
            click.echo(f"{r['slice_id']:<{width}}  {r['score']:.4f}  {flags} {mark}".rstrip())

    _emit(rows, as_json, human)


def _grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise click.BadParameter(f"expected ROWSxCOLS, got {text!r}") from None
    return rows, cols


@cli.command()
@click.argument("signature")
@click.option("--scene", type=click.Path(exists=True, dir_okay=False), required=True, help="scene.json file.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Pose sequence JSON to write.")
@click.option("-k", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--grid", "grid", help="Grid as ROWSxCOLS (default from config, 5x5).")
@click.option("--prior-failure", help="Note about a failed attempt, appended to the prompt.")
@json_option
@click.pass_obj
def synth(app: App, signature, scene, out, k, grid, prior_failure, as_json):
    """Synthesize a pose sequence for SIGNATURE in a scene."""
    from .synth import SceneSpec, synthesize

    shape = _grid(grid) if grid else (app.config.grid_rows, app.config.grid_cols)
    repo = app.load_repo()
    gw = app.gateway(repo.tree.embedding_dim)
    ps = synthesize(
        signature,
        SceneSpec.load(scene),
        repo,
        gw,
        app.lexicon(),
        k,
        shape,
        prior_failure=prior_failure,
        **app.thresholds(),
    )
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(ps.to_json(), encoding="utf-8")
    _emit(
        {"out": str(out), "poses": len(ps.poses), "slice_id": ps.source_slice_id},
        as_json,
        lambda: click.echo(f"{len(ps.poses)} poses from {ps.source_slice_id} written to {out}"),
    )


@cli.command()
@click.argument("instruction")
@click.option("--library", type=click.Path(dir_okay=False), required=True, help="Base skill library JSON.")
@click.option("--image", type=click.Path(exists=True, dir_okay=False), help="Scene observation.")
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Directory for plan.txt and plan.json.")
@json_option
@click.pass_obj
def plan(app: App, instruction, library, image, out, as_json):
    """Plan INSTRUCTION, extending the library when it falls short."""
    from .plan import Instruction, SkillLibrary, plan_episode

    lib = SkillLibrary.load(library)
    episode = plan_episode(Instruction(instruction, Path(image) if image else None), lib, app.gateway())
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sidecar = dict(episode.plan.sidecar(), sufficient=episode.verdict.sufficient, instruction=instruction)
    (out / "plan.txt").write_text(episode.plan.to_dsl(), encoding="utf-8")
    (out / "plan.json").write_text(json.dumps(sidecar, sort_keys=True, indent=1) + "\n", encoding="utf-8")

    def human():
        click.echo(episode.plan.to_dsl(), nl=False)
        ext = episode.plan.extended_skills
        click.echo(f"extended skills: {', '.join(ext)}" if ext else "library sufficient")

    _emit(sidecar, as_json, human)


def _print_stats(counts: dict) -> None:
    for key in ("class_count", "verb_instance_count", "description_count", "slice_count"):
        click.echo(f"{key:<20} {counts[key]}")


@cli.command()
@click.option("--verbose", "detail", is_flag=True, help="Add the per-class slice histogram.")
@json_option
@click.pass_obj
def stats(app: App, detail, as_json):
    """Node counts per taxonomy level."""
    from .taxonomy import class_histogram
    from .taxonomy import stats as tree_stats

    repo = app.load_repo()
    data = tree_stats(repo.tree).to_dict()
    if detail:
        data["histogram"] = class_histogram(repo.tree)

    def human():
        _print_stats(data)
        for cls, n in data.get("histogram", {}).items():
            click.echo(f"  {cls:<28} {n}")

    _emit(data, as_json, human)


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--videos", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--short-slices", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@json_option
def corpus(out_dir, videos, short_slices, seed, as_json):
    """Write the synthetic demo corpus (manifests, fixtures, scenes, library)."""
    from .synthetic import generate_corpus

    if short_slices > videos:
        raise click.BadParameter("at most one short slice per video", param_hint="--short-slices")
    c = generate_corpus(out_dir, seed=seed, n_videos=videos, short_slices=short_slices)
    info = {
        "manifests": str(c.manifests[0].parent),
        "fixtures": str(c.fixtures),
        "library": str(c.library),
        "scenes": {k: str(v) for k, v in c.scenes.items()},
        "counts": c.counts,
    }
    _emit(info, as_json, lambda: click.echo(json.dumps(info, indent=1)))


def main():
    cli(prog_name="skillbank")


if __name__ == "__main__":
    main()
