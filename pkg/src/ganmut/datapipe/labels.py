"""Remap source-dataset label ids into the canonical 7-label order."""

from __future__ import annotations

from ..emotion_space import EmotionLabel

A = EmotionLabel

# Aff-Wild2 expression track: 0 neutral, 1 anger, 2 disgust, 3 fear,
# 4 happiness, 5 sadness, 6 surprise, 7 other; -1 marks unannotated frames.
AFF_WILD2 = {0: A.NEUTRAL, 1: A.ANGER, 2: A.DISGUST, 3: A.FEAR, 4: A.HAPPINESS,
             5: A.SADNESS, 6: A.SURPRISE, 7: None, -1: None}

# AffectNet: 0 neutral, 1 happy, 2 sad, 3 surprise, 4 fear, 5 disgust, 6 anger,
# 7 contempt, 8 none, 9 uncertain, 10 no-face.
AFFECTNET = {0: A.NEUTRAL, 1: A.HAPPINESS, 2: A.SADNESS, 3: A.SURPRISE, 4: A.FEAR,
             5: A.DISGUST, 6: A.ANGER, 7: None, 8: None, 9: None, 10: None}

CANONICAL = {int(label): label for label in EmotionLabel}

REMAP_TABLES: dict[str, dict[int, EmotionLabel | None]] = {
    "canonical": CANONICAL,
    "aff_wild2": AFF_WILD2,
    "affectnet": AFFECTNET,
}


class LabelSchemeError(KeyError):
    pass


def register_scheme(name: str, table: dict[int, EmotionLabel | None]) -> None:
    REMAP_TABLES[name] = {int(k): (None if v is None else EmotionLabel(v)) for k, v in table.items()}


def remap_label(scheme: str, source_id: int) -> EmotionLabel | None:
    """Canonical label for ``source_id``, or None when the frame should be dropped.

    Ids missing from a registered table are treated as non-relevant.
    """
    try:
        table = REMAP_TABLES[scheme]
    except KeyError:
        raise LabelSchemeError(f"no remap table registered for scheme {scheme!r}") from None
    return table.get(int(source_id))
