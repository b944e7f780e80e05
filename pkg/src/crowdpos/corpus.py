"""Corpus data model, ingestion, and the Bangor-to-Universal mapping stage.

Corpus record format: UTF-8 text, one token per line, 5 tab-separated
fields (utterance_id, position, surface, lang, bangor_tag). Lines starting
with `#` are comments; blank lines are ignored.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .tags import LangId, UniversalTag, parse_lang, parse_tag


class CorpusFormatError(ValueError):
    pass


class MappingError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Token:
    """One corpus word with language id and pre-annotated Bangor tag."""

    token_id: str
    surface: str
    lang: LangId
    bangor_tag: str
    utterance_id: str
    position: int
    context: str = ""


def token_id_for(utterance_id: str, position: int) -> str:
    return f"{utterance_id}:{position}"


def parse_corpus(stream: Iterable[str] | str) -> list[Token]:
    """Parse corpus records into Tokens, order preserved.

    Context strings are rebuilt per utterance by joining surfaces in
    position order. Raises CorpusFormatError naming the line and field
    on malformed input or duplicate (utterance_id, position) keys.
    """
    if isinstance(stream, str):
        stream = stream.splitlines()

    rows = []
    seen: set[tuple[str, int]] = set()
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        utt = fields[0].strip() if fields else "?"
        where = f"{utt} line {lineno}"
        if len(fields) != 5:
            raise CorpusFormatError(f"{where}: expected 5 fields, got {len(fields)}")
        utt_id, pos_s, surface, lang_s, bangor = (f.strip() for f in fields)
        if not utt_id:
            raise CorpusFormatError(f"{where}: empty utterance_id")
        try:
            position = int(pos_s)
        except ValueError:
            raise CorpusFormatError(f"{where}: position {pos_s!r} is not an integer") from None
        if position < 0:
            raise CorpusFormatError(f"{where}: negative position {position}")
        if not surface:
            raise CorpusFormatError(f"{where}: empty surface")
        try:
            lang = parse_lang(lang_s)
        except ValueError as exc:
            raise CorpusFormatError(f"{where}: {exc}") from None
        key = (utt_id, position)
        if key in seen:
            raise CorpusFormatError(f"{where}: duplicate position {position} in utterance {utt_id}")
        seen.add(key)
        rows.append((utt_id, position, surface, lang, bangor))

    by_utt: dict[str, list[tuple[int, str]]] = {}
    for utt_id, position, surface, _, _ in rows:
        by_utt.setdefault(utt_id, []).append((position, surface))
    contexts = {
        utt_id: " ".join(s for _, s in sorted(pairs)) for utt_id, pairs in by_utt.items()
    }

    return [
        Token(
            token_id=token_id_for(utt_id, position),
            surface=surface,
            lang=lang,
            bangor_tag=bangor,
            utterance_id=utt_id,
            position=position,
            context=contexts[utt_id],
        )
        for utt_id, position, surface, lang, bangor in rows
    ]


def parse_corpus_file(path: str | Path) -> list[Token]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh)


def serialize_corpus(tokens: Iterable[Token]) -> str:
    lines = [
        "\t".join((t.utterance_id, str(t.position), t.surface, t.lang.value, t.bangor_tag))
        for t in tokens
    ]
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class MappingTable:
    """Total lookup from (bangor_tag, lang) to a Universal tag.

    `ambiguity_delimiter`, when set, lets lookups resolve source tags that
    carry multiple candidates (e.g. "det/pron"): the candidates must all
    map to the same Universal tag, otherwise the fallback applies.
    """

    entries: dict[tuple[str, LangId], UniversalTag]
    fallback: UniversalTag
    ambiguity_delimiter: str | None = None

    def __len__(self) -> int:
        return len(self.entries)


_LANG_ORDER = {
    LangId.ENG: (LangId.ENG,),
    LangId.SPA: (LangId.SPA,),
    # und tokens try eng entries, then spa, before the fallback
    LangId.UND: (LangId.UND, LangId.ENG, LangId.SPA),
}


def _lookup(table: MappingTable, bangor_tag: str, lang: LangId) -> UniversalTag | None:
    for cand_lang in _LANG_ORDER[lang]:
        hit = table.entries.get((bangor_tag, cand_lang))
        if hit is not None:
            return hit
    return None


def map_to_universal(token: Token, table: MappingTable) -> UniversalTag:
    """Map a token's Bangor tag to a Universal tag; total and deterministic."""
    tag = token.bangor_tag.strip()
    hit = _lookup(table, tag, token.lang)
    if hit is not None:
        return hit
    delim = table.ambiguity_delimiter
    if delim and delim in tag:
        parts = [p for p in (p.strip() for p in tag.split(delim)) if p]
        resolved = {_lookup(table, p, token.lang) for p in parts}
        if len(resolved) == 1 and None not in resolved:
            return resolved.pop()
    return table.fallback


def load_mapping(source: str | Path | dict) -> MappingTable:
    """Load and validate a mapping file.

    Schema: {"fallback": "<TAG>", "entries": [{"bangor", "lang", "universal"}...],
    "ambiguity": {"delimiter": "<s>", "mode": "resolve"|"reject"}} where lang is
    eng|spa|und|any. Entries whose bangor tag contains the ambiguity delimiter
    are resolved from their candidates (all candidates must share one target)
    or rejected, per the directive.
    """
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)

    if "fallback" not in doc:
        raise MappingError("mapping file is missing the mandatory fallback tag")
    try:
        fallback = parse_tag(doc["fallback"])
    except ValueError as exc:
        raise MappingError(f"invalid fallback: {exc}") from None

    ambiguity = doc.get("ambiguity") or {}
    delim = ambiguity.get("delimiter")
    mode = ambiguity.get("mode", "resolve")
    if mode not in ("resolve", "reject"):
        raise MappingError(f"unknown ambiguity mode {mode!r}")

    bad: list[str] = []
    plain: list[tuple[str, str, UniversalTag | None]] = []
    ambiguous: list[tuple[str, str, UniversalTag | None]] = []
    for i, entry in enumerate(doc.get("entries", [])):
        bangor = str(entry.get("bangor", "")).strip()
        lang_s = str(entry.get("lang", "any")).strip()
        if not bangor:
            bad.append(f"entry {i}: empty bangor tag")
            continue
        if lang_s not in ("eng", "spa", "und", "any"):
            bad.append(f"entry {i} ({bangor}): unknown language id {lang_s}")
            continue
        target: UniversalTag | None = None
        if "universal" in entry:
            try:
                target = parse_tag(str(entry["universal"]))
            except ValueError as exc:
                bad.append(f"entry {i} ({bangor}): {exc}")
                continue
        if delim and delim in bangor:
            ambiguous.append((bangor, lang_s, target))
        elif target is None:
            bad.append(f"entry {i} ({bangor}): missing universal target")
        else:
            plain.append((bangor, lang_s, target))
    if bad:
        raise MappingError("invalid mapping entries: " + "; ".join(bad))

    if ambiguous and mode == "reject":
        names = ", ".join(b for b, _, _ in ambiguous)
        raise MappingError(f"ambiguous source tags rejected by directive: {names}")

    entries: dict[tuple[str, LangId], UniversalTag] = {}

    def put(bangor: str, lang_s: str, tag: UniversalTag, explicit: bool) -> None:
        langs = (LangId.ENG, LangId.SPA, LangId.UND) if lang_s == "any" else (LangId(lang_s),)
        for lang in langs:
            key = (bangor, lang)
            if key in entries and entries[key] != tag:
                if explicit:
                    raise MappingError(
                        f"conflicting targets for ({bangor}, {lang.value}): "
                        f"{entries[key].value} vs {tag.value}"
                    )
                continue  # explicit entry wins over an "any" expansion
            if explicit or key not in entries:
                entries[key] = tag

    for bangor, lang_s, tag in plain:
        put(bangor, lang_s, tag, explicit=(lang_s != "any"))

    table = MappingTable(entries=entries, fallback=fallback, ambiguity_delimiter=delim)

    # Ambiguous entries are "cleaned": candidates must agree on one target.
    for bangor, lang_s, declared in ambiguous:
        parts = [p for p in (p.strip() for p in bangor.split(delim)) if p]
        langs = (LangId.ENG, LangId.SPA, LangId.UND) if lang_s == "any" else (LangId(lang_s),)
        for lang in langs:
            resolved = {_lookup(table, p, lang) for p in parts}
            if len(resolved) == 1 and None not in resolved:
                tag = resolved.pop()
            else:
                tag = fallback
            if declared is not None and declared != tag:
                raise MappingError(
                    f"ambiguous entry ({bangor}, {lang.value}) declares "
                    f"{declared.value} but resolves to {tag.value}"
                )
            entries[(bangor, lang)] = tag

    return MappingTable(entries=dict(entries), fallback=fallback, ambiguity_delimiter=delim)
