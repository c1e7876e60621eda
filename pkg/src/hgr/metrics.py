"""Retrieval ranks, R@K / MedR / MnR reports, and binary-selection scoring."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

DIRECTIONS = ("text_to_video", "video_to_text")
PERTURBATIONS = ("switch_roles", "replace_actions", "replace_persons", "replace_scenes", "incomplete_events")


def rank_gallery(sims, ground_truth):
    """1-based rank of each query's best-ranked ground-truth item.

    sims: (n_queries, n_gallery); higher is better. Ties are broken by
    ascending gallery index, so an item's rank is one plus the number of
    items scoring strictly higher plus equal-scoring items with a lower index.
    ground_truth: per query, an iterable of gallery indices.
    """
    sims = np.asarray(sims)
    ranks = np.empty(sims.shape[0], dtype=np.int64)
    for q, gts in enumerate(ground_truth):
        gts = np.fromiter(gts, dtype=np.int64)
        if gts.size == 0:
            raise ValueError(f"query {q} has no ground-truth gallery item")
        row = sims[q]
        best = None
        for g in gts:
            higher = np.count_nonzero(row > row[g])
            tied_before = np.count_nonzero(row[:g] == row[g])
            r = 1 + higher + tied_before
            best = r if best is None else min(best, r)
        ranks[q] = best
    return ranks


@dataclass
class RankingReport:
    direction: str
    r1: float
    r5: float
    r10: float
    medr: float
    mnr: float
    n_queries: int

    @property
    def rsum(self):
        return self.r1 + self.r5 + self.r10

    def to_dict(self):
        d = asdict(self)
        d["rsum"] = self.rsum
        return d


def compute_metrics(ranks, direction="text_to_video"):
    ranks = np.asarray(ranks, dtype=float)
    if ranks.size == 0:
        raise ValueError("no ranks to summarise")
    n = ranks.size
    return RankingReport(
        direction=direction,
        r1=100.0 * np.count_nonzero(ranks <= 1) / n,
        r5=100.0 * np.count_nonzero(ranks <= 5) / n,
        r10=100.0 * np.count_nonzero(ranks <= 10) / n,
        medr=float(np.median(ranks)),
        mnr=float(ranks.mean()),
        n_queries=n,
    )


def retrieval_reports(sims, caption_video):
    """Both-direction reports from a (videos x captions) score matrix.

    caption_video[j] is the video index that caption j describes.
    """
    sims = np.asarray(sims)
    caption_video = np.asarray(caption_video)
    t2v = rank_gallery(sims.T, [[v] for v in caption_video])
    by_video = [np.flatnonzero(caption_video == v) for v in range(sims.shape[0])]
    queries = [i for i, c in enumerate(by_video) if c.size]
    v2t = rank_gallery(sims[queries], [by_video[i] for i in queries])
    return compute_metrics(t2v, "text_to_video"), compute_metrics(v2t, "video_to_text")


def combined_rsum(reports):
    return sum(r.rsum for r in reports)


def per_level_reports(score_mats, caption_video):
    """{level: (t2v, v2t)} for the event / action / entity / fusion score matrices."""
    return {lvl: retrieval_reports(m, caption_video) for lvl, m in score_mats.items()}


def format_table(rows):
    """Aligned text table. rows: {name: (t2v report, v2t report)}."""
    head = ["", "t2v R@1", "R@5", "R@10", "MedR", "MnR", "rsum", "v2t R@1", "R@5", "R@10", "MedR", "MnR", "rsum", "total"]
    lines = [head]
    for name, (a, b) in rows.items():
        lines.append([name] + [f"{x:.1f}" for x in (a.r1, a.r5, a.r10, a.medr, a.mnr, a.rsum,
                                                     b.r1, b.r5, b.r10, b.medr, b.mnr, b.rsum,
                                                     a.rsum + b.rsum)])
    widths = [max(len(r[i]) for r in lines) for i in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in lines)


def reports_json(rows):
    return json.dumps({name: {"text_to_video": a.to_dict(), "video_to_text": b.to_dict(),
                              "rsum": a.rsum + b.rsum} for name, (a, b) in rows.items()}, indent=1, sort_keys=True)


def reports_csv(rows):
    out = ["level,direction,r1,r5,r10,medr,mnr,rsum"]
    for name, pair in rows.items():
        for r in pair:
            out.append(f"{name},{r.direction},{r.r1},{r.r5},{r.r10},{r.medr},{r.mnr},{r.rsum}")
    return "\n".join(out) + "\n"


# -- binary selection ---------------------------------------------------------------

@dataclass
class BinarySelectionReport:
    accuracy: dict = field(default_factory=dict)  # kind -> percent
    counts: dict = field(default_factory=dict)    # kind -> triplets

    @property
    def average(self):
        """Unweighted mean over the tasks that have triplets."""
        vals = [self.accuracy[k] for k in PERTURBATIONS if self.counts.get(k)]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def weighted_average(self):
        total = sum(self.counts.get(k, 0) for k in PERTURBATIONS)
        if not total:
            return 0.0
        return sum(self.accuracy[k] * self.counts[k] for k in PERTURBATIONS if self.counts.get(k)) / total

    def to_dict(self):
        return {"accuracy": self.accuracy, "counts": self.counts,
                "average_task_uniform": self.average, "average_triplet_weighted": self.weighted_average}

    def table(self):
        head = ["", *PERTURBATIONS, "average", "weighted"]
        rows = [["# triplets", *[str(self.counts.get(k, 0)) for k in PERTURBATIONS],
                 f"{np.mean([self.counts.get(k, 0) for k in PERTURBATIONS]):.1f}", ""],
                ["accuracy", *[f"{self.accuracy.get(k, 0.0):.2f}" for k in PERTURBATIONS],
                 f"{self.average:.2f}", f"{self.weighted_average:.2f}"]]
        lines = [head] + rows
        widths = [max(len(r[i]) for r in lines) for i in range(len(head))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in lines)


def score_binary(pos_scores, neg_scores, kinds):
    """Accuracy per perturbation kind; a tie counts as a wrong choice."""
    pos_scores, neg_scores = np.asarray(pos_scores), np.asarray(neg_scores)
    rep = BinarySelectionReport()
    kinds = np.asarray(kinds)
    for k in PERTURBATIONS:
        sel = kinds == k
        n = int(sel.sum())
        rep.counts[k] = n
        rep.accuracy[k] = 100.0 * float(np.count_nonzero(pos_scores[sel] > neg_scores[sel])) / n if n else 0.0
    return rep
