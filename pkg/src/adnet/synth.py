"""Deterministic paired-register corpus generator with known ground truth.

Two "registers" (side a: archaic surface forms, side b: modern ones) realize
the same bank of sentence templates, so the meaning-label distribution is
identical on both sides by construction while the surface vocabulary differs
in a controlled way. The overlap ratio rho sets the fraction of lexeme pairs
whose surface is shared (the modern form is then used on both sides). Every
clean sentence maps back to its template through an inverse lexicon, giving
an oracle for meaning preservation and register consistency of generated
text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .text import build_corpus_pair, tokenize

# (archaic, modern) per lexeme; index order matters: shared lexemes are picked
# at evenly spaced indices, so iconic register markers sit off that lattice.
LEXEMES = {
    "subj": [("maiden", "girl"), ("lad", "boy"), ("sire", "father"),
             ("dame", "mother"), ("steed", "horse"), ("hound", "dog"),
             ("knave", "thief"), ("minstrel", "singer"), ("healer", "doctor"),
             ("scribe", "writer"), ("liege", "king"), ("varlet", "servant")],
    "verb": [("beholdeth", "sees"), ("speaketh", "says"), ("loveth", "loves"),
             ("feareth", "fears"), ("seeketh", "seeks"), ("findeth", "finds"),
             ("knoweth", "knows"), ("maketh", "makes"), ("taketh", "takes"),
             ("giveth", "gives"), ("heareth", "hears"), ("calleth", "calls")],
    "obj": [("quill", "pen"), ("tome", "book"), ("raiment", "clothes"),
            ("victuals", "food"), ("dwelling", "house"), ("blade", "knife"),
            ("chalice", "cup"), ("farthing", "coin"), ("missive", "letter"),
            ("taper", "candle"), ("glass", "mirror"), ("satchel", "bag")],
    "adj": [("fair", "pretty"), ("wondrous", "amazing"), ("fearsome", "scary"),
            ("olden", "old"), ("merry", "happy"), ("doleful", "sad"),
            ("cunning", "clever"), ("feeble", "weak"), ("stalwart", "strong"),
            ("comely", "handsome"), ("wretched", "miserable"), ("gallant", "brave")],
    "adv": [("anon", "soon"), ("swiftly", "quickly"), ("verily", "truly"),
            ("oft", "often"), ("scarce", "barely"), ("forthwith", "immediately"),
            ("gladly", "happily"), ("privily", "secretly"), ("fain", "eagerly"),
            ("betimes", "early"), ("nigh", "nearby"), ("eftsoons", "again")],
}

FUNCTION_WORDS = [
    ("unto", "unto", "to"), ("aye", "aye", "yes"), ("nay", "nay", "no"),
    ("upon", "upon", "on"), ("prithee", "prithee", "please"),
    ("thee", "thee", "you"), ("amidst", "amidst", "amid"),
    ("thy", "thy", "your"), ("hath", "hath", "has"), ("doth", "doth", "does"),
    ("betwixt", "betwixt", "between"), ("art", "art", "are"),
    ("whence", "whence", "where"), ("ere", "ere", "before"),
    ("wherefore", "wherefore", "why"), ("hither", "hither", "here"),
    ("shall", "shall", "will"), ("thither", "thither", "there"),
    ("mayhap", "mayhap", "maybe"), ("naught", "naught", "nothing"),
]

# element kinds: ("slot", category) | ("f", function key) | ("p", punctuation)
S, V, O, ADJ, ADV = (("slot", c) for c in ("subj", "verb", "obj", "adj", "adv"))


def _f(key):
    return ("f", key)


def _p(ch):
    return ("p", ch)


TEMPLATES = [
    [S, V, O, _p(".")],
    [S, V, O, _p("!")],
    [ADJ, S, V, O, _p(".")],
    [S, V, ADJ, O, _p(".")],
    [S, V, O, ADV, _p(".")],
    [_f("aye"), _p(","), S, V, O, _p(".")],
    [_f("nay"), _p(","), S, V, O, _p("!")],
    [_f("prithee"), _p(","), V, _f("thee"), O, _p(".")],
    [S, _f("shall"), V, O, _p(".")],
    [_f("whence"), V, S, _p("?")],
    [_f("wherefore"), V, S, O, _p("?")],
    [S, V, _f("unto"), O, _p(".")],
    [S, V, _f("upon"), O, _p(".")],
    [S, V, _f("betwixt"), O, _p(".")],
    [S, V, O, _p(","), ADV, _p(".")],
    [_f("thy"), O, V, _p(".")],
    [S, V, _f("thy"), O, _p(".")],
    [_f("mayhap"), S, V, O, _p(".")],
    [S, V, O, _p(","), _f("aye"), _p("?")],
    [_f("hither"), V, S, _p("!")],
    [_f("thither"), V, S, _p(".")],
    [S, _f("art"), ADJ, _p(".")],
    [S, _f("art"), ADJ, _p("!")],
    [S, _f("hath"), O, _p(".")],
    [S, _f("hath"), ADJ, O, _p(".")],
    [S, _f("doth"), V, O, _p(".")],
    [_f("naught"), V, S, _p(".")],
    [S, V, _f("amidst"), O, _p(".")],
    [_f("ere"), ADV, _p(","), S, V, O, _p(".")],
    [ADJ, S, V, ADJ, O, _p(".")],
]

@dataclass
class RegisterSpec:
    """Template bank plus per-register lexical realization."""

    templates: list = field(default_factory=lambda: [list(t) for t in TEMPLATES])
    lexemes: dict = field(default_factory=lambda: {k: list(v) for k, v in LEXEMES.items()})
    function_words: list = field(default_factory=lambda: [tuple(w) for w in FUNCTION_WORDS])
    rho: float = 0.3
    fronting_prob: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        self._function_index = {key: i for i, (key, _, _) in enumerate(self.function_words)}
        self._shared = {
            cat: _shared_indices(len(pairs), self.rho)
            for cat, pairs in self.lexemes.items()
        }
        self._shared["__function__"] = _shared_indices(len(self.function_words), self.rho)
        self._validate()
        self._build_inverse()

    def _validate(self):
        surfaces = {}
        for cat, pairs in self.lexemes.items():
            if not pairs:
                raise ValueError(f"category '{cat}' has no realizations")
            for i, (arch, mod) in enumerate(pairs):
                for s in (arch, mod):
                    prev = surfaces.setdefault(s, (cat, i))
                    if prev != (cat, i):
                        raise ValueError(f"surface '{s}' is ambiguous: {prev} vs {(cat, i)}")
        for key, arch, mod in self.function_words:
            for s in (arch, mod):
                prev = surfaces.setdefault(s, ("__function__", key))
                if prev != ("__function__", key):
                    raise ValueError(f"surface '{s}' is ambiguous: {prev}")
        for ti, template in enumerate(self.templates):
            has_content = False
            for kind, val in template:
                if kind == "slot":
                    if val not in self.lexemes:
                        raise ValueError(f"template {ti}: slot '{val}' has no realization")
                    has_content = True
                elif kind == "f":
                    if val not in self._function_index:
                        raise ValueError(f"template {ti}: function word '{val}' unknown")
                elif kind != "p":
                    raise ValueError(f"template {ti}: unknown element kind '{kind}'")
            if not has_content:
                raise ValueError(f"template {ti} has no content slot")

    def _build_inverse(self):
        # surface token -> template element it realizes
        inv = {}
        for cat, pairs in self.lexemes.items():
            for i, (arch, mod) in enumerate(pairs):
                inv[self.surface(("slot", cat), i, "a")] = ("slot", cat)
                inv[self.surface(("slot", cat), i, "b")] = ("slot", cat)
        for key, _, _ in self.function_words:
            inv[self.function_surface(key, "a")] = ("f", key)
            inv[self.function_surface(key, "b")] = ("f", key)
        for template in self.templates:
            for kind, val in template:
                if kind == "p":
                    inv[val] = ("p", val)
        self._inverse = inv
        self._signatures = {}
        for ti, template in enumerate(self.templates):
            sig = tuple(
                (kind, val) if kind != "slot" else ("slot", val)
                for kind, val in template
            )
            if sig in self._signatures:
                raise ValueError(f"templates {self._signatures[sig]} and {ti} are indistinguishable")
            self._signatures[sig] = ti
        # register-exclusive surfaces (shared lexemes expose no archaic form)
        self._exclusive = {"a": set(), "b": set()}
        for cat, pairs in self.lexemes.items():
            for i, (arch, mod) in enumerate(pairs):
                if i not in self._shared[cat]:
                    self._exclusive["a"].add(arch)
                    self._exclusive["b"].add(mod)
        for i, (key, arch, mod) in enumerate(self.function_words):
            if i not in self._shared["__function__"]:
                self._exclusive["a"].add(arch)
                self._exclusive["b"].add(mod)

    def surface(self, element, lexeme_index: int, register: str) -> str:
        kind, cat = element
        arch, mod = self.lexemes[cat][lexeme_index]
        if lexeme_index in self._shared[cat]:
            return mod
        return arch if register == "a" else mod

    def function_surface(self, key: str, register: str) -> str:
        i = self._function_index[key]
        _, arch, mod = self.function_words[i]
        if i in self._shared["__function__"]:
            return mod
        return arch if register == "a" else mod

    def exclusive_surfaces(self, register: str) -> set:
        return set(self._exclusive[register])

    def frontable_templates(self) -> tuple:
        return tuple(
            i for i, t in enumerate(self.templates)
            if len(t) >= 2 and t[-2][0] == "slot" and t[-2][1] == "adv"
            and t[-1][0] == "p" and sum(1 for e in t if e[0] == "p") == 1
        )


def _shared_indices(n: int, rho: float) -> frozenset:
    n_shared = int(round(rho * n))
    if n_shared <= 0:
        return frozenset()
    return frozenset(int(np.floor(i * n / n_shared)) for i in range(n_shared))


def default_register_spec(rho: float = 0.3, fronting_prob: float = 0.5) -> RegisterSpec:
    return RegisterSpec(rho=rho, fronting_prob=fronting_prob)


@dataclass
class SyntheticCorpus:
    spec: RegisterSpec
    texts_a: list
    texts_b: list
    templates_a: list
    templates_b: list


def realize(spec: RegisterSpec, template_id: int, register: str, rng,
            front: bool = False) -> list:
    """One surface realization of a template as a token list."""
    tokens = []
    for kind, val in spec.templates[template_id]:
        if kind == "slot":
            idx = int(rng.integers(0, len(spec.lexemes[val])))
            tokens.append(spec.surface((kind, val), idx, register))
        elif kind == "f":
            tokens.append(spec.function_surface(val, register))
        else:
            tokens.append(val)
    if front:
        tokens = [tokens[-2]] + tokens[:-2] + [tokens[-1]]
    return tokens


def generate_corpora(spec: RegisterSpec, n_per_register: int, seed: int) -> SyntheticCorpus:
    """Seed-deterministic corpus pair with identical meaning marginals.

    Both sides draw the same multiset of template ids (line order shuffled
    independently); slot fillers are sampled independently per side, so the
    corpora are not sentence-parallel.
    """
    if n_per_register < 1:
        raise ValueError("n_per_register must be >= 1")
    n_templates = len(spec.templates)
    base = [i % n_templates for i in range(n_per_register)]
    frontable = set(spec.frontable_templates())
    out = {}
    for register, stream in (("a", 0xA), ("b", 0xB)):
        rng = np.random.default_rng([seed, stream])
        order = rng.permutation(n_per_register)
        templates = [base[i] for i in order]
        texts = []
        for t in templates:
            front = (register == "a" and t in frontable
                     and rng.random() < spec.fronting_prob)
            texts.append(" ".join(realize(spec, t, register, rng, front=front)))
        out[register] = (texts, templates)
    return SyntheticCorpus(spec, out["a"][0], out["b"][0], out["a"][1], out["b"][1])


def write_corpus(corpus: SyntheticCorpus, out_dir, name: str) -> dict:
    """Emit `<name>.a.txt`, `<name>.b.txt`, `<name>.truth.tsv`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "a": out / f"{name}.a.txt",
        "b": out / f"{name}.b.txt",
        "truth": out / f"{name}.truth.tsv",
    }
    paths["a"].write_text("".join(s + "\n" for s in corpus.texts_a), encoding="utf-8")
    paths["b"].write_text("".join(s + "\n" for s in corpus.texts_b), encoding="utf-8")
    rows = ["side\tline\ttemplate_id"]
    rows += [f"a\t{i}\t{t}" for i, t in enumerate(corpus.templates_a)]
    rows += [f"b\t{i}\t{t}" for i, t in enumerate(corpus.templates_b)]
    paths["truth"].write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    return {k: str(v) for k, v in paths.items()}


def read_truth(path) -> dict:
    """truth TSV -> {side: [template_id per line]}."""
    out = {"a": {}, "b": {}}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        assert header.strip().split("\t") == ["side", "line", "template_id"]
        for row in fh:
            side, line, tid = row.strip().split("\t")
            out[side][int(line)] = int(tid)
    return {side: [d[i] for i in range(len(d))] for side, d in out.items()}


def as_corpus_pair(corpus: SyntheticCorpus, min_frequency: int = 2, max_len: int = 20):
    return build_corpus_pair(corpus.texts_a, corpus.texts_b,
                             min_frequency=min_frequency, max_len=max_len)


def unfront(spec: RegisterSpec, tokens: list) -> list:
    """Undo adverb fronting: a leading adverb moves back before the trailing
    punctuation mark (or to the end when there is none)."""
    if len(tokens) < 2:
        return list(tokens)
    first = spec._inverse.get(tokens[0])
    if first != ("slot", "adv"):
        return list(tokens)
    rest = list(tokens[1:])
    if rest and spec._inverse.get(rest[-1], ("", ""))[0] == "p":
        return rest[:-1] + [tokens[0], rest[-1]]
    return rest + [tokens[0]]


def infer_template(spec: RegisterSpec, tokens: list):
    """Template id realized by a token sequence, or None if unalignable."""
    elements = []
    for tok in unfront(spec, tokens):
        el = spec._inverse.get(tok)
        if el is None:
            return None
        elements.append(el)
    return spec._signatures.get(tuple(elements))


def register_consistent(spec: RegisterSpec, tokens: list, register: str) -> bool:
    """True when no token is exclusive to the opposite register."""
    if not tokens:
        return False
    opposite = "b" if register == "a" else "a"
    exclusive = spec._exclusive[opposite]
    return not any(t in exclusive for t in tokens)


@dataclass
class OracleScores:
    meaning_match: float
    form_match: float
    n_unalignable: int
    n_total: int


def oracle_scores(spec: RegisterSpec, sentences: list, target_register: str,
                  source_template_ids: list) -> OracleScores:
    """Ground-truth rates for generated sentences.

    meaning_match: inverse-mapped template equals the source template.
    form_match: surface lexicon consistent with the target register.
    Unalignable sentences count as meaning mismatches and are tallied.
    """
    if len(sentences) != len(source_template_ids):
        raise ValueError("sentences and source templates must align")
    n = len(sentences)
    if n == 0:
        raise ValueError("no sentences to score")
    meaning_hits = form_hits = unalignable = 0
    for text, source_tid in zip(sentences, source_template_ids):
        tokens = tokenize(text)
        inferred = infer_template(spec, tokens)
        if inferred is None:
            unalignable += 1
        elif inferred == source_tid:
            meaning_hits += 1
        if register_consistent(spec, tokens, target_register):
            form_hits += 1
    return OracleScores(meaning_hits / n, form_hits / n, unalignable, n)
