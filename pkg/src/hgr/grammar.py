"""Controlled caption grammar shared by the rule parser and the synthetic world."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .graph import SrlFrame, tokenize

_AGENTS = (
    "a man", "a woman", "a boy", "a girl", "a chef", "men", "a dog", "a teacher",
    "a player", "a singer", "a dancer", "a driver", "a farmer", "a doctor", "a nurse", "women",
    "a monkey", "a robot", "a pilot", "a student", "a worker", "a clown", "a person", "kids",
)
_PATIENTS = (
    "an onion", "a violin", "an egg", "a ball", "a guitar", "a carrot", "a box", "a bottle",
    "a potato", "a door", "a tomato", "a kite", "a drum", "a lemon", "a cake", "a chair",
    "a shirt", "a fish", "a book", "a cup", "a melon", "a hat", "a wheel", "a bag",
)
# (base, third person, progressive, transitive)
_ACTIONS = (
    ("cut", "cuts", "cutting", True), ("strum", "strums", "strumming", True),
    ("pour", "pours", "pouring", True), ("drive", "drives", "driving", True),
    ("wash", "washes", "washing", True), ("throw", "throws", "throwing", True),
    ("carry", "carries", "carrying", True), ("push", "pushes", "pushing", True),
    ("paint", "paints", "painting", True), ("open", "opens", "opening", True),
    ("kick", "kicks", "kicking", True), ("peel", "peels", "peeling", True),
    ("dance", "dances", "dancing", False), ("run", "runs", "running", False),
    ("swim", "swims", "swimming", False), ("jump", "jumps", "jumping", False),
)
_SCENES = (
    "on a stage", "in the beach", "in a kitchen", "on a street",
    "in a park", "in a garden", "on a field", "in a studio",
    "in a classroom", "on a boat", "in a forest", "on a roof",
)
_DIRECTIONS = ("into a bowl", "onto a plate", "into a pot", "onto a table")
_MANNERS = ("in towels", "in costumes", "in uniforms", "in pajamas")


@dataclass(frozen=True)
class Verb:
    base: str
    third: str
    ing: str
    transitive: bool


@dataclass(frozen=True)
class Clause:
    """One predicate of a latent scene. Entity ids index ``SyntheticGrammar.entities``."""

    agent: int
    action: int
    patient: int | None = None
    scene: int | None = None
    direction: int | None = None
    manner: int | None = None
    then: bool = False


@dataclass(frozen=True)
class LatentScene:
    clauses: tuple[Clause, ...]
    progressive: bool = True
    noise_seed: int = 0

    def swap_roles(self, k=0):
        c = self.clauses[k]
        cl = list(self.clauses)
        cl[k] = replace(c, agent=c.patient, patient=c.agent)
        return replace(self, clauses=tuple(cl))


@dataclass
class SyntheticGrammar:
    agents: tuple[str, ...]
    patients: tuple[str, ...]
    actions: tuple[Verb, ...]
    scenes: tuple[str, ...]
    directions: tuple[str, ...] = _DIRECTIONS
    manners: tuple[str, ...] = _MANNERS
    plural: frozenset = frozenset({"men", "women", "kids"})
    _table: dict = field(default=None, init=False, repr=False)

    TEMPLATES = (
        "NP AUX VERB NP LOC",
        "NP AUX VERB NP DIR LOC",
        "NP VERB NP LOC",
        "NP AUX VERB MNR LOC",
        "NP VERB NP AND THEN VERB NP LOC",
        "NP AUX VERB NP AND VERB NP",
        "NP MNR",
    )

    @classmethod
    def default(cls, n_agents=24, n_actions=16, n_patients=24, n_scenes=8):
        if min(n_agents, n_actions, n_patients, n_scenes) < 2:
            raise ValueError("every lexicon needs at least 2 entries")
        if n_agents > len(_AGENTS) or n_patients > len(_PATIENTS) or n_scenes > len(_SCENES) or n_actions > len(_ACTIONS):
            raise ValueError("requested lexicon larger than the built-in vocabulary")
        trans = [a for a in _ACTIONS if a[3]]
        intrans = [a for a in _ACTIONS if not a[3]]
        n_intrans = min(len(intrans), n_actions // 4)
        acts = trans[: n_actions - n_intrans] + intrans[:n_intrans]
        return cls(
            agents=_AGENTS[:n_agents],
            patients=_PATIENTS[:n_patients],
            actions=tuple(Verb(*a) for a in acts),
            scenes=_SCENES[:n_scenes],
        )

    @property
    def entities(self):
        return self.agents + self.patients

    def agent_ids(self):
        return range(len(self.agents))

    def patient_ids(self):
        return range(len(self.agents), len(self.agents) + len(self.patients))

    def phrase_table(self):
        """Token tuple -> (category, payload) for the rule parser."""
        if self._table is None:
            t = {}
            for i, p in enumerate(self.entities):
                t[tuple(p.split())] = ("NP", i)
            for i, v in enumerate(self.actions):
                for form in (v.base, v.third, v.ing):
                    t[(form,)] = ("VERB", i)
            for cat, lex in (("LOC", self.scenes), ("DIR", self.directions), ("MNR", self.manners)):
                for i, p in enumerate(lex):
                    t[tuple(p.split())] = (cat, i)
            t[("is",)] = ("AUX", "is")
            t[("are",)] = ("AUX", "are")
            t[("and",)] = ("AND", None)
            t[("then",)] = ("THEN", None)
            self._table = t
        return self._table

    # -- realization --------------------------------------------------------
    def realize(self, scene: LatentScene):
        """Sentence plus the frames a correct parser must recover."""
        if not scene.clauses:
            raise ValueError("scene has no clauses")
        words, frames = [], []
        first = scene.clauses[0]
        agent = self.entities[first.agent].split()
        plural = self.entities[first.agent] in self.plural
        agent_span = (0, len(agent))
        words += agent
        for k, c in enumerate(scene.clauses):
            verb = self.actions[c.action]
            args = [(agent_span, "ARG0")]
            if k > 0:
                words.append("and")
                if c.then:
                    args.append(((len(words), len(words) + 1), "ARGM-TMP"))
                    words.append("then")
            if scene.progressive:
                if k == 0:
                    words.append("are" if plural else "is")
                form = verb.ing
            else:
                form = verb.base if plural else verb.third
            vpos = len(words)
            words.append(form)
            for slot, lex, role in (("patient", self.entities, "ARG1"), ("direction", self.directions, "ARGM-DIR"),
                                    ("manner", self.manners, "ARGM-MNR"), ("scene", self.scenes, "ARGM-LOC")):
                idx = getattr(c, slot)
                if idx is None:
                    continue
                ph = lex[idx].split()
                args.append(((len(words), len(words) + len(ph)), role))
                words += ph
            frames.append(SrlFrame(vpos, sorted(args)))
        return " ".join(words), frames

    def fragment(self, agent, modifiers):
        """A verbless fragment such as "men in towels": NP followed by modifier phrases."""
        return " ".join([self.entities[agent]] + list(modifiers))

    def tokens(self, sentence):
        return tokenize(sentence)
