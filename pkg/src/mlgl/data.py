"""Label taxonomy, dataset loading, splits and the synthetic corpus."""
from __future__ import annotations

import csv
import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .errors import DataError
from .features import features_from_samples, features_from_wav
from .wav import write_wav

AR_COLUMN_NAMES = ("annoyance", "annoyance_rating", "ar", "rating")
SPLIT_NAMES = ("train", "val", "test")
# split fractions follow the 2200/245/445 reference partition
SPLIT_FRACTIONS = (2200 / 2890, 245 / 2890, 445 / 2890)


@dataclass(frozen=True)
class Taxonomy:
    fae_names: tuple[str, ...]
    cae_names: tuple[str, ...]
    fae_to_cae: tuple[int, ...]

    @property
    def n_fae(self) -> int:
        return len(self.fae_names)

    @property
    def n_cae(self) -> int:
        return len(self.cae_names)

    def derive_cae(self, y_fae: np.ndarray) -> np.ndarray:
        """Coarse label is the OR of its fine children."""
        y_fae = np.asarray(y_fae)
        out = np.zeros(y_fae.shape[:-1] + (self.n_cae,), dtype=y_fae.dtype)
        for k, j in enumerate(self.fae_to_cae):
            np.maximum(out[..., j], y_fae[..., k], out=out[..., j])
        return out


def default_taxonomy_text() -> str:
    ref = importlib.resources.files("mlgl") / "assets" / "taxonomy.txt"
    return ref.read_text(encoding="utf-8")


def parse_taxonomy(text: str, origin: str = "<taxonomy>") -> Taxonomy:
    fae: list[str] = []
    cae: list[str] = []
    mapping: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{origin}:{lineno}: expected 'fine = coarse', got {raw!r}")
        fine, coarse = (part.strip() for part in line.split("=", 1))
        if not fine or not coarse:
            raise DataError(f"{origin}:{lineno}: empty name in {raw!r}")
        if fine in fae:
            raise DataError(f"{origin}:{lineno}: duplicate fine event {fine!r}")
        fae.append(fine)
        if coarse not in cae:
            cae.append(coarse)
        mapping.append(cae.index(coarse))
    if len(fae) < 2:
        raise DataError(f"{origin}: needs at least two fine events, found {len(fae)}")
    return Taxonomy(tuple(fae), tuple(cae), tuple(mapping))


def load_taxonomy(path=None) -> Taxonomy:
    if path is None:
        return parse_taxonomy(default_taxonomy_text(), "default taxonomy")
    p = Path(path)
    if not p.is_file():
        raise DataError(f"taxonomy file not found: {p}")
    return parse_taxonomy(p.read_text(encoding="utf-8"), str(p))


@dataclass
class Record:
    clip_id: str
    y_fae: np.ndarray
    ar: float


def _parse_binary(value: str) -> float:
    v = value.strip()
    if v in ("0", "0.0"):
        return 0.0
    if v in ("1", "1.0"):
        return 1.0
    raise ValueError(f"expected 0 or 1, got {value!r}")


def load_labels(path, taxonomy: Taxonomy) -> list[Record]:
    """Parse a label CSV: one id column, one binary column per fine event,
    one annoyance column.  Event columns are matched by name when the
    header contains every taxonomy name, by position otherwise."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"label file not found: {p}")
    with open(p, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{p}: needs a header row and at least one record")
    header = [h.strip() for h in rows[0]]
    lowered = [h.lower() for h in header]

    ar_col = None
    for name in AR_COLUMN_NAMES:
        if name in lowered:
            ar_col = lowered.index(name)
            break
    if ar_col is None:
        ar_col = len(header) - 1
    if all(name in header for name in taxonomy.fae_names):
        event_cols = [header.index(name) for name in taxonomy.fae_names]
    else:
        candidates = [i for i in range(1, len(header)) if i != ar_col]
        if len(candidates) < taxonomy.n_fae:
            raise DataError(f"{p}: header has {len(candidates)} candidate event columns, "
                            f"taxonomy needs {taxonomy.n_fae}")
        event_cols = candidates[:taxonomy.n_fae]

    records: list[Record] = []
    problems: list[str] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            problems.append(f"row {lineno}: has {len(row)} fields, header has {len(header)}")
            continue
        clip_id = row[0].strip()
        if not clip_id:
            problems.append(f"row {lineno}: empty clip id")
            continue
        if clip_id in seen:
            problems.append(f"row {lineno}: duplicate clip id {clip_id!r}")
            continue
        try:
            y = np.array([_parse_binary(row[i]) for i in event_cols], dtype=np.float32)
        except ValueError as e:
            problems.append(f"row {lineno}: {e}")
            continue
        try:
            ar = float(row[ar_col])
        except ValueError:
            problems.append(f"row {lineno}: annoyance {row[ar_col]!r} is not a number")
            continue
        if not 1.0 <= ar <= 10.0:
            problems.append(f"row {lineno}: annoyance {ar} outside [1, 10]")
            continue
        seen.add(clip_id)
        records.append(Record(clip_id, y, ar))
    if problems:
        shown = "; ".join(problems[:10])
        more = f" (+{len(problems) - 10} more)" if len(problems) > 10 else ""
        raise DataError(f"{p}: {shown}{more}")
    return records


def load_split(path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"split file not found: {p}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2 or parts[1] not in SPLIT_NAMES:
            raise DataError(f"{p}:{lineno}: expected 'clip_id<TAB>train|val|test', got {raw!r}")
        out[parts[0]] = parts[1]
    return out


def make_split(clip_ids, seed: int) -> dict[str, str]:
    """Deterministic split with the reference train/val/test proportions."""
    ids = sorted(clip_ids)
    perm = rng_mod.stream(seed, rng_mod.TAG_SPLIT).permutation(len(ids))
    n_train = int(round(SPLIT_FRACTIONS[0] * len(ids)))
    n_val = int(round(SPLIT_FRACTIONS[1] * len(ids)))
    out: dict[str, str] = {}
    for rank, idx in enumerate(perm):
        if rank < n_train:
            part = "train"
        elif rank < n_train + n_val:
            part = "val"
        else:
            part = "test"
        out[ids[idx]] = part
    return out


@dataclass
class Dataset:
    """Records plus their precomputed (n_mels, frames) feature arrays."""
    records: list[Record]
    features: dict[str, np.ndarray]
    taxonomy: Taxonomy

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, clip_ids) -> "Dataset":
        wanted = set(clip_ids)
        recs = [r for r in self.records if r.clip_id in wanted]
        feats = {r.clip_id: self.features[r.clip_id] for r in recs}
        return Dataset(recs, feats, self.taxonomy)


def load_dataset(labels_csv, audio_dir, taxonomy: Taxonomy, feature_cfg) -> Dataset:
    records = load_labels(labels_csv, taxonomy)
    audio = Path(audio_dir)
    if not audio.is_dir():
        raise DataError(f"audio directory not found: {audio}")
    feats: dict[str, np.ndarray] = {}
    missing: list[str] = []
    for rec in records:
        wav_path = audio / f"{rec.clip_id}.wav"
        if not wav_path.is_file():
            missing.append(rec.clip_id)
            continue
        feats[rec.clip_id] = features_from_wav(wav_path, feature_cfg)
    if missing:
        shown = ", ".join(missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        raise DataError(f"{audio}: missing wav files for {shown}{more}")
    return Dataset(records, feats, taxonomy)


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass
class SynthClip:
    clip_id: str
    samples: np.ndarray
    y_fae: np.ndarray
    ar: float


def synth_dataset(seed: int, n: int, sample_rate: int = 8000, duration: float = 1.0,
                  taxonomy: Taxonomy | None = None,
                  ar_weights: np.ndarray | None = None, ar_base: float = 5.0,
                  ar_noise: float = 0.3, p_active: float = 0.125) -> list[SynthClip]:
    """Each fine event k contributes a tone at 200 + 150k Hz; the rating is
    ar_base + sum of per-class weights over active events plus noise,
    clipped to [1, 10].  Default weights ramp linearly over [-1.5, 1.5]."""
    if taxonomy is None:
        taxonomy = load_taxonomy()
    k = taxonomy.n_fae
    if ar_weights is None:
        ar_weights = np.linspace(-1.5, 1.5, k)
    ar_weights = np.asarray(ar_weights, dtype=np.float64)
    if ar_weights.shape != (k,):
        raise DataError(f"ar_weights must have shape ({k},), got {ar_weights.shape}")
    top = 200.0 + 150.0 * (k - 1)
    if top >= sample_rate / 2:
        raise DataError(f"sample rate {sample_rate} too low for {k} event tones (top {top} Hz)")

    gen = rng_mod.stream(seed, rng_mod.TAG_SYNTH)
    n_samp = int(round(duration * sample_rate))
    t = np.arange(n_samp) / sample_rate
    clips: list[SynthClip] = []
    for i in range(n):
        active = gen.random(k) < p_active
        if not active.any():
            active[int(gen.integers(k))] = True
        x = 0.01 * gen.standard_normal(n_samp)
        for cls in np.nonzero(active)[0]:
            amp = gen.uniform(0.05, 0.3)
            phase = gen.uniform(0.0, 2.0 * np.pi)
            x = x + amp * np.sin(2.0 * np.pi * (200.0 + 150.0 * cls) * t + phase)
        peak = np.abs(x).max()
        if peak > 0.9:
            x *= 0.9 / peak
        y = active.astype(np.float32)
        ar = float(np.clip(ar_base + float(ar_weights @ y) + gen.normal(0.0, ar_noise),
                           1.0, 10.0))
        clips.append(SynthClip(f"synth{i:05d}", x, y, ar))
    return clips


def synth_to_dataset(clips: list[SynthClip], sample_rate: int, feature_cfg,
                     taxonomy: Taxonomy | None = None) -> Dataset:
    if taxonomy is None:
        taxonomy = load_taxonomy()
    records = [Record(c.clip_id, c.y_fae, c.ar) for c in clips]
    feats = {c.clip_id: features_from_samples(c.samples, sample_rate, feature_cfg)
             for c in clips}
    return Dataset(records, feats, taxonomy)


def write_synth_dataset(out_dir, clips: list[SynthClip], sample_rate: int,
                        taxonomy: Taxonomy, split_seed: int = 0):
    """Materialize a synthetic corpus in the on-disk dataset layout:
    audio/*.wav, labels.csv, split.txt, taxonomy.txt."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    for clip in clips:
        write_wav(out / "audio" / f"{clip.clip_id}.wav", clip.samples, sample_rate)
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", *taxonomy.fae_names, "annoyance"])
        for clip in clips:
            writer.writerow([clip.clip_id,
                             *(str(int(v)) for v in clip.y_fae),
                             f"{clip.ar:.6f}"])
    split = make_split([c.clip_id for c in clips], split_seed)
    with open(out / "split.txt", "w", encoding="utf-8") as fh:
        for cid in sorted(split):
            fh.write(f"{cid}\t{split[cid]}\n")
    (out / "taxonomy.txt").write_text(
        "\n".join(f"{f} = {taxonomy.cae_names[j]}"
                  for f, j in zip(taxonomy.fae_names, taxonomy.fae_to_cae)) + "\n",
        encoding="utf-8")
