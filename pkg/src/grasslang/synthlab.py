"""Synthetic phonotactic languages with ground truth.

Languages are order-1 or order-2 Markov chains over a phone set; utterances
are symbol sequences rendered as noisy posteriorgrams through a Dirichlet
emission.  Pseudo-recognizers stand in for parallel phone decoders: each one
relabels the oracle units with a fixed permutation and optionally merges
them down to its own smaller phone set, with independent emission noise per
recognizer.  Everything is a pure function of the global seed, so generated
datasets are byte-identical across reruns.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matio
from .errors import InputError
from .phonetics import PhoneticSequence, save_posteriorgram, write_manifest

ROW_TOL = 1e-12


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary labels; independent of PYTHONHASHSEED."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class SyntheticLanguage:
    """Markov chain over M units; transition rows indexed by encoded history."""

    name: str
    num_units: int
    order: int
    transition: np.ndarray  # (M**order, M), rows stochastic
    initial: np.ndarray     # (M,), stochastic

    def __post_init__(self):
        if self.order not in (1, 2):
            raise InputError(f"order must be 1 or 2, got {self.order}")
        M = self.num_units
        trans = np.asarray(self.transition, dtype=np.float64)
        init = np.asarray(self.initial, dtype=np.float64)
        if trans.shape != (M ** self.order, M):
            raise InputError(
                f"transition shape {trans.shape} != ({M ** self.order}, {M})")
        if init.shape != (M,):
            raise InputError(f"initial shape {init.shape} != ({M},)")
        for arr, what in ((trans, "transition rows"), (init[None, :], "initial")):
            if np.any(arr < 0):
                raise InputError(f"{what} contain negative probabilities")
            if np.any(np.abs(arr.sum(axis=1) - 1.0) > ROW_TOL):
                raise InputError(f"{what} are not stochastic within {ROW_TOL}")
        object.__setattr__(self, "transition", trans.copy())
        object.__setattr__(self, "initial", init.copy())


@dataclass(frozen=True)
class EmissionConfig:
    """Dirichlet posterior noise: concentration kappa, mass floor epsilon.

    Row k is drawn from Dirichlet(kappa * (onehot(u_k) + floor)); in exact
    mode the deterministic mean (onehot + floor) / (1 + M * floor) is used,
    which degenerates to exact one-hot rows when the floor is zero.
    """

    concentration: float = 50.0
    floor: float = 0.05
    exact: bool = False

    def __post_init__(self):
        if self.concentration <= 0:
            raise InputError(f"concentration must be > 0, got {self.concentration}")
        if self.floor < 0:
            raise InputError(f"floor must be >= 0, got {self.floor}")


@dataclass(frozen=True)
class RecognizerSpec:
    """Pseudo-recognizer: its phone-set size and the relabeling seed."""

    num_units: int
    perm_seed: int

    def folding(self, oracle_units: int) -> np.ndarray:
        """Map from oracle unit index to this recognizer's unit index."""
        if self.num_units > oracle_units or self.num_units < 2:
            raise InputError(
                f"recognizer units {self.num_units} outside 2..{oracle_units}")
        perm = np.random.default_rng(self.perm_seed).permutation(oracle_units)
        return perm % self.num_units


@dataclass(frozen=True)
class TaskSpec:
    """Everything needed to generate one train/test dataset."""

    languages: tuple
    train_per_language: int
    test_per_language: int
    k_range: tuple
    recognizers: tuple
    emission: EmissionConfig = field(default_factory=EmissionConfig)
    seed: int = 0

    def __post_init__(self):
        if not self.languages:
            raise InputError("need at least one language")
        sizes = {lang.num_units for lang in self.languages}
        if len(sizes) != 1:
            raise InputError("languages must share one oracle phone set")
        names = [lang.name for lang in self.languages]
        if len(set(names)) != len(names):
            raise InputError("language names must be unique")
        k_min, k_max = self.k_range
        if k_min < 1 or k_max < k_min:
            raise InputError(f"bad sequence-length range {self.k_range}")
        if self.train_per_language < 1 or self.test_per_language < 1:
            raise InputError("utterance counts must be >= 1")
        if not self.recognizers:
            raise InputError("need at least one pseudo-recognizer")
        object.__setattr__(self, "languages", tuple(self.languages))
        object.__setattr__(self, "recognizers", tuple(self.recognizers))
        object.__setattr__(self, "k_range", tuple(self.k_range))


def sample_sequence(lang: SyntheticLanguage, K: int, seed) -> np.ndarray:
    """Draw K unit indices; history shorter than the order is marginalized.

    The first symbol follows the initial distribution.  For an order-2
    chain the second symbol uses the transition table averaged uniformly
    over the missing oldest history slot.
    """
    if K < 1:
        raise InputError(f"sequence length must be >= 1, got {K}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    M = lang.num_units
    marginal = None
    if lang.order == 2:
        marginal = lang.transition.reshape(M, M, M).mean(axis=0)
    seq = np.empty(K, dtype=np.int64)
    seq[0] = rng.choice(M, p=lang.initial)
    for k in range(1, K):
        if lang.order == 1:
            row = lang.transition[seq[k - 1]]
        elif k == 1:
            row = marginal[seq[0]]
        else:
            row = lang.transition[seq[k - 2] * M + seq[k - 1]]
        seq[k] = rng.choice(M, p=row)
    return seq


def emit_posteriors(sequence, num_units: int, cfg: EmissionConfig,
                    seed, phoneset_id: str = "") -> PhoneticSequence:
    """Render a unit sequence as a row-stochastic posteriorgram."""
    seq = np.asarray(sequence, dtype=np.int64)
    if np.any(seq < 0) or np.any(seq >= num_units):
        raise InputError("sequence has unit indices outside the phone set")
    onehot = np.eye(num_units)[seq]
    alpha = cfg.concentration * (onehot + cfg.floor)
    if cfg.exact:
        rows = (onehot + cfg.floor) / (1.0 + num_units * cfg.floor)
    else:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        gammas = rng.gamma(alpha)
        rows = gammas / gammas.sum(axis=1, keepdims=True)
    return PhoneticSequence(posteriors=rows, phoneset_id=phoneset_id)


def fold_units(seq: PhoneticSequence, folding: np.ndarray,
               num_units: int, phoneset_id: str) -> PhoneticSequence:
    """Merge oracle unit posteriors into a recognizer's smaller phone set."""
    indicator = np.zeros((seq.num_units, num_units))
    indicator[np.arange(seq.num_units), folding] = 1.0
    return PhoneticSequence(posteriors=seq.posteriors @ indicator,
                            phoneset_id=phoneset_id)


def make_task(spec: TaskSpec, out_dir) -> dict:
    """Generate posteriorgram files and train/test manifests.

    Writes one file per (utterance, recognizer) under ``post/`` and one
    manifest per split with paths relative to the manifest's directory.
    Returns the manifest paths and file count.
    """
    out_dir = Path(out_dir)
    post_dir = out_dir / "post"
    post_dir.mkdir(parents=True, exist_ok=True)
    n_files = 0
    manifests = {}
    for split, count in (("train", spec.train_per_language),
                         ("test", spec.test_per_language)):
        records = []
        for lang in spec.languages:
            for i in range(count):
                utt_id = f"{lang.name}_{split}{i:04d}"
                utt_rng = np.random.default_rng(derive_seed(spec.seed, utt_id))
                K = int(utt_rng.integers(spec.k_range[0], spec.k_range[1] + 1))
                sequence = sample_sequence(lang, K, utt_rng)
                paths = []
                for r, rec in enumerate(spec.recognizers):
                    emit_rng = np.random.default_rng(
                        derive_seed(spec.seed, utt_id, "emit", r))
                    oracle_post = emit_posteriors(
                        sequence, lang.num_units, spec.emission, emit_rng)
                    folded = fold_units(oracle_post, rec.folding(lang.num_units),
                                        rec.num_units, phoneset_id=f"pseudo{r}")
                    rel = f"post/{utt_id}.r{r}.gsm"
                    save_posteriorgram(folded, out_dir / rel)
                    paths.append(rel)
                    n_files += 1
                records.append((utt_id, lang.name, paths))
        manifest_path = out_dir / f"{split}.manifest"
        write_manifest(manifest_path, records)
        manifests[split] = manifest_path
    return {"manifests": manifests, "posteriorgram_files": n_files}


# ---------------------------------------------------------------------------
# Language construction helpers and committed fixtures
# ---------------------------------------------------------------------------

def modular_language(name: str, num_units: int, *, bigram_shift=None,
                     trigram_coeffs=(1, 1, 0), bigram_mass=0.0,
                     trigram_mass=0.7) -> SyntheticLanguage:
    """Order-2 chain built from modular-arithmetic rules.

    With history (a, b) the next unit is (q*a + r*b + s) mod M with
    probability ``trigram_mass`` (coefficients q, r, s; q coprime with M
    keeps all pairwise marginals exactly uniform), (b + bigram_shift) mod M
    with probability ``bigram_mass``, and uniform otherwise.
    """
    M = num_units
    q, r, s = trigram_coeffs
    rest = 1.0 - bigram_mass - trigram_mass
    if rest < 0:
        raise InputError("bigram_mass + trigram_mass must be <= 1")
    trans = np.full((M * M, M), rest / M)
    for a in range(M):
        for b in range(M):
            row = a * M + b
            trans[row, (q * a + r * b + s) % M] += trigram_mass
            if bigram_mass:
                trans[row, (b + bigram_shift) % M] += bigram_mass
    trans /= trans.sum(axis=1, keepdims=True)
    return SyntheticLanguage(name=name, num_units=M, order=2,
                             transition=trans, initial=np.full(M, 1.0 / M))


def fixture_a() -> TaskSpec:
    """Standard end-to-end fixture: 3 distinct languages, 2 pseudo-recognizers.

    The languages differ in both their preferred bigram shift and their
    trigram rule, so subspaces separate them from context order 2 upward.
    """
    langs = (
        modular_language("alpha", 10, bigram_shift=1, trigram_coeffs=(1, 1, 0),
                         bigram_mass=0.45, trigram_mass=0.35),
        modular_language("bravo", 10, bigram_shift=3, trigram_coeffs=(3, 1, 1),
                         bigram_mass=0.45, trigram_mass=0.35),
        modular_language("carol", 10, bigram_shift=7, trigram_coeffs=(7, 1, 5),
                         bigram_mass=0.45, trigram_mass=0.35),
    )
    return TaskSpec(languages=langs, train_per_language=100, test_per_language=50,
                    k_range=(120, 200),
                    recognizers=(RecognizerSpec(10, 101), RecognizerSpec(8, 202)),
                    emission=EmissionConfig(concentration=50.0, floor=0.05),
                    seed=7)


def fixture_trigram() -> TaskSpec:
    """Languages with provably identical unigram and bigram statistics.

    Pure bijective trigram rules: with history (a, b) the next unit is
    (q*a + b + s) mod M w.p. 0.85, uniform otherwise.  Because gcd(q, M) = 1,
    every pairwise marginal is exactly uniform for all three languages, so
    only context order >= 3 can separate them.
    """
    langs = (
        modular_language("tri-a", 10, trigram_coeffs=(1, 1, 0), trigram_mass=0.85),
        modular_language("tri-b", 10, trigram_coeffs=(3, 1, 1), trigram_mass=0.85),
        modular_language("tri-c", 10, trigram_coeffs=(7, 1, 5), trigram_mass=0.85),
    )
    return TaskSpec(languages=langs, train_per_language=100, test_per_language=50,
                    k_range=(160, 240),
                    recognizers=(RecognizerSpec(10, 101),),
                    emission=EmissionConfig(concentration=100.0, floor=0.02),
                    seed=11)


def fixture_control() -> TaskSpec:
    """Indistinguishability control: fixture-A with three identical languages."""
    base = fixture_a()
    lang = base.languages[0]
    clones = tuple(
        SyntheticLanguage(name=name, num_units=lang.num_units, order=lang.order,
                          transition=lang.transition, initial=lang.initial)
        for name in ("one", "two", "three"))
    return TaskSpec(languages=clones, train_per_language=100, test_per_language=50,
                    k_range=base.k_range, recognizers=base.recognizers,
                    emission=base.emission, seed=13)


# ---------------------------------------------------------------------------
# TaskSpec files: UTF-8 key=value plus matrix files for the tables
# ---------------------------------------------------------------------------

def save_taskspec(spec: TaskSpec, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stem = path.stem
    lines = [
        f"seed={spec.seed}",
        f"train_per_language={spec.train_per_language}",
        f"test_per_language={spec.test_per_language}",
        f"k_min={spec.k_range[0]}",
        f"k_max={spec.k_range[1]}",
        f"emission_concentration={spec.emission.concentration!r}",
        f"emission_floor={spec.emission.floor!r}",
        f"emission_exact={int(spec.emission.exact)}",
    ]
    for lang in spec.languages:
        trans_rel = f"{stem}.{lang.name}.trans.gsm"
        init_rel = f"{stem}.{lang.name}.init.gsm"
        matio.save_matrix(path.parent / trans_rel, lang.transition)
        matio.save_matrix(path.parent / init_rel, lang.initial[None, :])
        lines.append(f"language={lang.name}:{lang.num_units}:{lang.order}"
                     f":{trans_rel}:{init_rel}")
    for rec in spec.recognizers:
        lines.append(f"recognizer={rec.num_units}:{rec.perm_seed}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_taskspec(path) -> TaskSpec:
    path = Path(path)
    keys = {}
    languages = []
    recognizers = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: malformed line {line!r}")
        key, value = line.split("=", 1)
        if key == "language":
            name, units, order, trans_rel, init_rel = value.split(":")
            languages.append(SyntheticLanguage(
                name=name, num_units=int(units), order=int(order),
                transition=matio.load_matrix(path.parent / trans_rel),
                initial=matio.load_matrix(path.parent / init_rel)[0]))
        elif key == "recognizer":
            units, perm_seed = value.split(":")
            recognizers.append(RecognizerSpec(int(units), int(perm_seed)))
        else:
            keys[key] = value
    try:
        return TaskSpec(
            languages=tuple(languages),
            train_per_language=int(keys["train_per_language"]),
            test_per_language=int(keys["test_per_language"]),
            k_range=(int(keys["k_min"]), int(keys["k_max"])),
            recognizers=tuple(recognizers),
            emission=EmissionConfig(
                concentration=float(keys["emission_concentration"]),
                floor=float(keys["emission_floor"]),
                exact=bool(int(keys.get("emission_exact", "0")))),
            seed=int(keys["seed"]))
    except KeyError as exc:
        raise InputError(f"{path}: missing key {exc}") from exc
