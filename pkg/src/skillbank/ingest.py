"""Annotate a set of video manifests and file the slices into a repository."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .annotate import VideoRecord, annotate_video
from .errors import DuplicateSlice, SkillbankError
from .store import Repository
from .taxonomy import DEFAULT_THETA, RepoStats, insert_slice, stats

log = logging.getLogger(__name__)


@dataclass
class IngestReport:
    videos: int = 0
    slices_per_video: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)  # (slice label, reason)
    failures: list = field(default_factory=list)  # (manifest, error)
    stats: RepoStats = field(default_factory=RepoStats)

    @property
    def ingested(self) -> int:
        return sum(self.slices_per_video.values())

    def to_dict(self) -> dict:
        return {
            "videos": self.videos,
            "slices_per_video": dict(sorted(self.slices_per_video.items())),
            "ingested": self.ingested,
            "dropped": [{"slice": s, "reason": r} for s, r in self.dropped],
            "failures": [{"manifest": m, "error": e} for m, e in self.failures],
            "stats": self.stats.to_dict(),
        }


def ingest_videos(manifests, base_library, gateway, lexicon, theta=DEFAULT_THETA, templates=None, repo=None, jobs=1):
    """Annotate every manifest, then insert slices in manifest order.

    Annotation may fan out over ``jobs`` threads; insertion stays sequential
    so the resulting tree does not depend on scheduling.
    """
    repo = repo if repo is not None else Repository.empty(gateway.dim)
    report = IngestReport(videos=len(manifests))

    def work(path):
        try:
            video = VideoRecord.load(path)
            return annotate_video(video, base_library, gateway, templates), None
        except SkillbankError as exc:
            return None, exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, manifests))
    else:
        results = [work(p) for p in manifests]

    for path, (ann, err) in zip(manifests, results):
        if err is not None:
            log.warning("video %s failed: %s", path, err)
            report.failures.append((str(path), f"{type(err).__name__}: {err}"))
            continue
        report.dropped.extend(ann.dropped)
        kept = 0
        for sl in ann.slices:
            try:
                insert_slice(repo.tree, sl, lexicon, gateway, theta)
            except DuplicateSlice as exc:
                report.dropped.append((sl.slice_id, str(exc)))
                continue
            repo.slices[sl.slice_id] = sl
            kept += 1
        report.slices_per_video[ann.video_id] = kept
    report.stats = stats(repo.tree)
    return repo, report
