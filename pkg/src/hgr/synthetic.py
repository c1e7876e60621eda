"""Deterministic desk-scale world: latent scenes, factor-code video features and caption perturbations."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import Caption, Dataset, data_root, load_dataset, write_dataset
from .grammar import Clause, LatentScene, SyntheticGrammar
from .graph import build_graph, rule_parse, tokenize
from .metrics import PERTURBATIONS
from .text import Vocabulary
from .video import VideoFeatures

# block order inside a frame feature
BLOCKS = ("agent", "action", "patient", "scene")


@dataclass
class WorldSpec:
    seed: int = 0
    n_videos: int = 16
    frames_per_video: int = 8
    feature_dim: int = 128
    noise: float = 0.1
    split: tuple = (0.7, 0.15, 0.15)
    max_clauses: int = 3
    n_agents: int = 24
    n_actions: int = 16
    n_patients: int = 24
    n_scenes: int = 8

    def to_dict(self):
        d = dict(self.__dict__)
        d["split"] = list(self.split)
        return d


@dataclass
class World:
    spec: WorldSpec
    grammar: SyntheticGrammar
    scenes: dict          # video id -> LatentScene
    dataset: Dataset
    codes: dict = field(repr=False, default_factory=dict)


class InfeasibleSplit(ValueError):
    pass


def split_counts(n, split):
    """Absolute split sizes from counts or fractions (largest remainder)."""
    split = tuple(split)
    if all(isinstance(s, (int, np.integer)) for s in split):
        if sum(split) != n:
            raise InfeasibleSplit(f"split sizes {split} do not add up to {n} videos")
        return split
    fr = np.asarray(split, dtype=float)
    if np.any(fr < 0) or fr.sum() <= 0:
        raise InfeasibleSplit(f"bad split fractions {split}")
    raw = fr / fr.sum() * n
    base = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - base), kind="stable")[: n - base.sum()]:
        base[i] += 1
    return tuple(int(b) for b in base)


def _codebooks(rng, grammar, width):
    n_ent = len(grammar.entities)

    def book(n):
        m = rng.standard_normal((n, width))
        return m / np.linalg.norm(m, axis=1, keepdims=True)

    return {"entity": book(n_ent), "action": book(len(grammar.actions)), "scene": book(len(grammar.scenes)),
            "direction": book(len(grammar.directions)), "manner": book(len(grammar.manners))}


def render_features(scene: LatentScene, codes, frames_per_video, feature_dim, noise):
    """Frame features for a latent scene.

    Each frame concatenates the codes of the clause active in its segment:
    [agent | action | patient (or manner) | scene (+ direction)], zero padded
    to ``feature_dim``, plus Gaussian noise seeded by ``scene.noise_seed``.
    """
    width = codes["entity"].shape[1]
    if feature_dim < 4 * width:
        raise ValueError(f"feature_dim {feature_dim} < 4 x code width {width}")
    n = len(scene.clauses)
    scene_ids = [c.scene for c in scene.clauses if c.scene is not None]
    setting = codes["scene"][scene_ids[-1]] if scene_ids else np.zeros(width)
    out = np.zeros((frames_per_video, feature_dim))
    bounds = np.linspace(0, frames_per_video, n + 1).round().astype(int)
    for k, c in enumerate(scene.clauses):
        blocks = [codes["entity"][scene.clauses[0].agent], codes["action"][c.action], np.zeros(width), setting.copy()]
        if c.patient is not None:
            blocks[2] = blocks[2] + codes["entity"][c.patient]
        if c.manner is not None:
            blocks[2] = blocks[2] + codes["manner"][c.manner]
        if c.direction is not None:
            blocks[3] = blocks[3] + codes["direction"][c.direction]
        out[bounds[k]:max(bounds[k + 1], bounds[k] + 1), : 4 * width] = np.concatenate(blocks)
    if noise > 0:
        out += noise * np.random.default_rng(scene.noise_seed).standard_normal(out.shape)
    return out.astype(np.float32)


def _sample_scene(rng, grammar, combos, max_clauses, noise_seed):
    """One latent scene whose every (agent, action, patient) triple is drawn from ``combos``."""
    n_clauses = int(rng.choice(np.arange(1, max_clauses + 1), p=_clause_weights(max_clauses)))
    acts = sorted({c[1] for c in combos})
    act = acts[int(rng.integers(len(acts)))]
    with_act = [c for c in combos if c[1] == act]
    first = with_act[int(rng.integers(len(with_act)))]
    agent = first[0]
    pool = [c for c in combos if c[0] == agent]
    triples = [first]
    for _ in range(n_clauses - 1):
        cand = [c for c in pool if c[1] not in {t[1] for t in triples}]
        if not cand:
            break
        triples.append(cand[rng.integers(len(cand))])
    clauses = []
    for k, (a, act, pat) in enumerate(triples):
        manner = direction = None
        if pat is None and rng.random() < 0.5:
            manner = int(rng.integers(len(grammar.manners)))
        if pat is not None and rng.random() < 0.2:
            direction = int(rng.integers(len(grammar.directions)))
        last = k == len(triples) - 1
        scene = int(rng.integers(len(grammar.scenes))) if last and rng.random() < 0.75 else None
        clauses.append(Clause(a, act, pat, scene, direction, manner, then=k > 0 and bool(rng.random() < 0.5)))
    return LatentScene(tuple(clauses), progressive=bool(rng.random() < 0.6), noise_seed=noise_seed)


def _clause_weights(max_clauses):
    w = np.array([0.6, 0.3, 0.1][:max_clauses])
    return w / w.sum()


def _all_combos(grammar):
    out = []
    for a in grammar.agent_ids():
        for act, verb in enumerate(grammar.actions):
            if verb.transitive:
                out += [(a, act, p) for p in grammar.patient_ids()]
            else:
                out.append((a, act, None))
    return out


def vocabulary_for(grammar):
    toks = set()
    for table_key in grammar.phrase_table():
        toks.update(table_key)
    return Vocabulary(sorted(toks))


def generate_world(seed=0, n_videos=16, frames_per_video=8, feature_dim=128, noise=0.1,
                   split=(0.7, 0.15, 0.15), max_clauses=3, grammar=None, spec=None):
    """Build features, captions, graphs and splits from ``seed`` alone.

    The (agent, action, patient) combination space is partitioned at random
    between splits, so no combination seen in training appears in val/test.
    """
    spec = spec or WorldSpec(seed, n_videos, frames_per_video, feature_dim, noise, tuple(split), max_clauses)
    grammar = grammar or SyntheticGrammar.default(spec.n_agents, spec.n_actions, spec.n_patients, spec.n_scenes)
    counts = split_counts(spec.n_videos, spec.split)
    rng = np.random.default_rng(spec.seed)
    width = spec.feature_dim // 4
    if width < 1:
        raise ValueError("feature_dim must be at least 4")
    codes = _codebooks(rng, grammar, width)

    combos = _all_combos(grammar)
    order = rng.permutation(len(combos))
    if spec.n_videos < 1:
        raise InfeasibleSplit("no videos requested")
    # each split gets a share of the combinations proportional to its videos
    share = np.floor(np.cumsum([0] + [c / spec.n_videos for c in counts]) * len(combos)).astype(int)
    parts = [[combos[i] for i in order[share[k]:share[k + 1]]] for k in range(3)]
    for k, c in enumerate(counts):
        if c and len(parts[k]) < c:
            raise InfeasibleSplit(f"split {k} needs {c} videos but only {len(parts[k])} role combinations are left")

    scenes, videos, captions, splits = {}, {}, [], {}
    seen_text = set()
    vid_no = 0
    for k, name in enumerate(("train", "val", "test")):
        splits[name] = []
        for _ in range(counts[k]):
            for _attempt in range(200):
                sc = _sample_scene(rng, grammar, parts[k], spec.max_clauses, noise_seed=spec.seed * 1_000_003 + vid_no)
                text, frames = grammar.realize(sc)
                if text not in seen_text:
                    break
            else:
                raise InfeasibleSplit(f"could not draw a distinct caption for split {name!r}")
            seen_text.add(text)
            vid = f"v{vid_no:04d}"
            vid_no += 1
            scenes[vid] = sc
            videos[vid] = VideoFeatures(vid, render_features(sc, codes, spec.frames_per_video, spec.feature_dim,
                                                             spec.noise))
            captions.append(Caption(f"{vid}#0", vid, text, build_graph(tokenize(text), frames)))
            splits[name].append(vid)
    ds = Dataset(videos, captions, splits, vocabulary_for(grammar))
    return World(spec, grammar, scenes, ds, codes)


def world_manifest(world):
    return json.dumps({"world": world.spec.to_dict()}, sort_keys=True, indent=1) + "\n"


# -- perturbations ------------------------------------------------------------------

@dataclass(frozen=True)
class Perturbed:
    kind: str
    text: str
    graph: object
    scene: LatentScene | None


@dataclass(frozen=True)
class Skipped:
    kind: str
    reason: str


def _pick_other(rng, options, current):
    opts = [o for o in options if o != current]
    return opts[int(rng.integers(len(opts)))]


def _from_scene(grammar, kind, scene):
    text, _frames = grammar.realize(scene)
    toks, frames = rule_parse(text, grammar)
    return Perturbed(kind, text, build_graph(toks, frames), scene)


def perturb(grammar: SyntheticGrammar, scene: LatentScene, kind, rng):
    """A minimally changed caption of ``scene`` or a :class:`Skipped` when ``kind`` does not apply."""
    cl = list(scene.clauses)
    if kind == "switch_roles":
        if len(cl) != 1 or cl[0].patient is None:
            return Skipped(kind, "needs a single clause with both agent and patient")
        return _from_scene(grammar, kind, scene.swap_roles(0))
    if kind == "replace_actions":
        k = int(rng.integers(len(cl)))
        trans = grammar.actions[cl[k].action].transitive
        used = {c.action for c in cl}
        opts = [i for i, v in enumerate(grammar.actions) if v.transitive == trans and i not in used]
        if not opts:
            return Skipped(kind, "no alternative action with the same argument structure")
        cl[k] = _replace(cl[k], action=opts[int(rng.integers(len(opts)))])
        return _from_scene(grammar, kind, _with(scene, cl))
    if kind == "replace_persons":
        slots = [("agent", 0)] + [("patient", k) for k, c in enumerate(cl) if c.patient is not None]
        slot, k = slots[int(rng.integers(len(slots)))]
        if slot == "agent":
            new = _pick_other(rng, list(grammar.agent_ids()), cl[0].agent)
            cl = [_replace(c, agent=new) for c in cl]
        else:
            taken = {c.patient for c in cl}
            opts = [p for p in grammar.patient_ids() if p not in taken]
            cl[k] = _replace(cl[k], patient=opts[int(rng.integers(len(opts)))])
        return _from_scene(grammar, kind, _with(scene, cl))
    if kind == "replace_scenes":
        ks = [k for k, c in enumerate(cl) if c.scene is not None]
        if not ks:
            return Skipped(kind, "caption has no scene phrase")
        k = ks[int(rng.integers(len(ks)))]
        cl[k] = _replace(cl[k], scene=_pick_other(rng, range(len(grammar.scenes)), cl[k].scene))
        return _from_scene(grammar, kind, _with(scene, cl))
    if kind == "incomplete_events":
        if len(cl) > 1:
            keep = int(rng.integers(1, len(cl)))
            kept = cl[:keep]
            if cl[-1].scene is not None and kept[-1].scene is None:
                kept[-1] = _replace(kept[-1], scene=cl[-1].scene)
            return _from_scene(grammar, kind, _with(scene, kept))
        c = cl[0]
        if c.patient is not None:
            return _from_scene(grammar, kind, _with(scene, [_replace(c, patient=None, direction=None)]))
        mods = [lex[i] for i, lex in ((c.manner, grammar.manners), (c.scene, grammar.scenes)) if i is not None]
        if not mods:
            return Skipped(kind, "a lone intransitive clause has nothing to drop but its only action")
        text = grammar.fragment(c.agent, mods)
        toks, frames = rule_parse(text, grammar)
        return Perturbed(kind, text, build_graph(toks, frames), None)
    raise ValueError(f"unknown perturbation kind {kind!r}; expected one of {PERTURBATIONS}")


def _replace(clause, **kw):
    return replace(clause, **kw)


def _with(scene, clauses):
    return replace(scene, clauses=tuple(clauses))


@dataclass(frozen=True)
class Triplet:
    video_id: str
    positive: str
    negative: str
    kind: str
    positive_graph: object
    negative_graph: object


def build_binary_benchmark(world: World, seed=0, split="test", kinds=PERTURBATIONS):
    """One positive per video and one negative per applicable perturbation kind."""
    rng = np.random.default_rng(seed)
    caps = {c.video_id: c for c in world.dataset.captions}
    triplets, skipped = [], Counter()
    for vid in world.dataset.splits[split]:
        cap = caps[vid]
        for kind in kinds:
            res = perturb(world.grammar, world.scenes[vid], kind, rng)
            if isinstance(res, Skipped):
                skipped[kind] += 1
                continue
            if res.text == cap.text:
                raise AssertionError(f"perturbation {kind} left {vid} unchanged")
            triplets.append(Triplet(vid, cap.text, res.text, kind, cap.graph, res.graph))
    return triplets, dict(skipped)


def triplet_counts(triplets):
    c = Counter(t.kind for t in triplets)
    return {k: c.get(k, 0) for k in PERTURBATIONS}


# -- persistence ----------------------------------------------------------------------

def scene_to_dict(scene):
    return {"clauses": [asdict(c) for c in scene.clauses], "progressive": scene.progressive,
            "noise_seed": scene.noise_seed}


def scene_from_dict(d):
    return LatentScene(tuple(Clause(**c) for c in d["clauses"]), d["progressive"], d["noise_seed"])


def write_world(world, out):
    out = write_dataset(world.dataset, out)
    (out / "world.json").write_text(world_manifest(world))
    with open(out / "scenes.jsonl", "w") as fh:
        for vid in sorted(world.scenes):
            fh.write(json.dumps({"video_id": vid, "scene": scene_to_dict(world.scenes[vid])}, sort_keys=True,
                                separators=(",", ":")) + "\n")
    return out


def load_world(path):
    """Reload a directory written by :func:`write_world`."""
    ds = load_dataset(path)
    root = data_root(path)
    doc = json.loads((root / "world.json").read_text())["world"]
    doc["split"] = tuple(doc["split"])
    spec = WorldSpec(**doc)
    grammar = SyntheticGrammar.default(spec.n_agents, spec.n_actions, spec.n_patients, spec.n_scenes)
    scenes = {}
    with open(root / "scenes.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            scenes[rec["video_id"]] = scene_from_dict(rec["scene"])
    return World(spec, grammar, scenes, ds)
