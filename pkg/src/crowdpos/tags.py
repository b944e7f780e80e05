"""Universal POS tagset and corpus language identifiers."""

from enum import Enum


class UniversalTag(str, Enum):
    """The 17-tag cross-lingual part-of-speech inventory (X = other)."""

    ADJ = "ADJ"
    ADP = "ADP"
    ADV = "ADV"
    AUX = "AUX"
    CONJ = "CONJ"
    SCONJ = "SCONJ"
    DET = "DET"
    INTJ = "INTJ"
    NOUN = "NOUN"
    NUM = "NUM"
    PART = "PART"
    PRON = "PRON"
    PROPN = "PROPN"
    PUNCT = "PUNCT"
    SYM = "SYM"
    VERB = "VERB"
    X = "X"

    def __str__(self) -> str:
        return self.value


ALL_TAGS: tuple[UniversalTag, ...] = tuple(UniversalTag)


class LangId(str, Enum):
    """Per-token language id used by the source corpus."""

    ENG = "eng"
    SPA = "spa"
    UND = "und"

    def __str__(self) -> str:
        return self.value


def parse_tag(name: str) -> UniversalTag:
    try:
        return UniversalTag(name)
    except ValueError:
        raise ValueError(f"unknown tag {name}") from None


def parse_lang(name: str) -> LangId:
    try:
        return LangId(name)
    except ValueError:
        raise ValueError(f"unknown language id {name}") from None
