"""Structured paper documents: parsing, cleaning, completeness checking.

Input convention: markdown with `$$`-fenced display equations, ``` fenced
pseudocode blocks, `Figure N:` / `Table N:` caption lines, and a
`## References` section of `[key] text` entries.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable

from .gateway import LlmGateway, simple_request


class MalformedDocument(Exception):
    """Input markdown is unusable: unclosed fence, missing references, empty."""


class PreservationViolation(Exception):
    """Cleaning lost an equation, algorithm block or cited reference."""


@dataclass(frozen=True)
class Heading:
    level: int
    text: str
    order: int


@dataclass(frozen=True)
class Paragraph:
    text: str
    section: int  # index into headings, -1 for the preamble
    order: int


@dataclass(frozen=True)
class AlgorithmBlock:
    text: str
    language: str
    section: int
    order: int


@dataclass(frozen=True)
class Caption:
    text: str
    section: int
    order: int


@dataclass(frozen=True)
class Equation:
    source: str
    index: int
    section: int
    order: int


@dataclass(frozen=True)
class FigureAsset:
    path: str
    alt: str
    section: int
    order: int
    caption_index: int | None = None


_YEAR_RE = re.compile(r"\b(19|20)\d{2}\b")
_EXTERNAL_ID_RE = re.compile(r"\b(arxiv|doi|url):(\S+)", re.IGNORECASE)


@dataclass(frozen=True)
class BibEntry:
    cite_key: str
    raw: str

    @property
    def title(self) -> str:
        head = self.raw.split(".")[0].strip()
        return head or self.raw.strip()

    @property
    def year(self) -> int:
        match = _YEAR_RE.search(self.raw)
        return int(match.group(0)) if match else 0

    @property
    def external_ids(self) -> dict[str, str]:
        return {m.group(1).lower(): m.group(2) for m in _EXTERNAL_ID_RE.finditer(self.raw)}


@dataclass
class PaperDocument:
    """Structured representation of a paper: text, math, figures, bibliography."""

    id: str
    headings: list[Heading] = field(default_factory=list)
    paragraphs: list[Paragraph] = field(default_factory=list)
    algorithm_blocks: list[AlgorithmBlock] = field(default_factory=list)
    captions: list[Caption] = field(default_factory=list)
    references: list[BibEntry] = field(default_factory=list)
    equations: list[Equation] = field(default_factory=list)
    figure_assets: list[FigureAsset] = field(default_factory=list)

    def reference_keys(self) -> list[str]:
        return [r.cite_key for r in self.references]

    def title(self) -> str:
        return self.headings[0].text if self.headings else self.id

    def year(self) -> int:
        for para in self.paragraphs[:3]:
            match = re.match(r"^Year:\s*((19|20)\d{2})", para.text)
            if match:
                return int(match.group(1))
        return 0

    def section_index(self, heading_text: str) -> int | None:
        for i, h in enumerate(self.headings):
            if h.text.strip().lower() == heading_text.strip().lower():
                return i
        return None

    def abstract_paragraphs(self) -> list[Paragraph]:
        idx = self.section_index("Abstract")
        if idx is not None:
            return [p for p in self.paragraphs if p.section == idx]
        return [p for p in self.paragraphs if p.section == -1]

    def body_text(self, exclude_sections: Iterable[int] = ()) -> str:
        skip = set(exclude_sections)
        chunks = [p.text for p in self.paragraphs if p.section not in skip]
        chunks += [c.text for c in self.captions if c.section not in skip]
        chunks += [a.text for a in self.algorithm_blocks if a.section not in skip]
        return "\n".join(chunks)

    def equations_following(self, paragraph: Paragraph) -> list[Equation]:
        """Equations directly after a paragraph, before the next paragraph."""
        later = [p.order for p in self.paragraphs if p.section == paragraph.section and p.order > paragraph.order]
        upper = min(later) if later else float("inf")
        return [
            e for e in self.equations
            if e.section == paragraph.section and paragraph.order < e.order < upper
        ]

    def to_markdown(self) -> str:
        blocks: list[tuple[int, str]] = []
        for h in self.headings:
            blocks.append((h.order, "#" * h.level + " " + h.text))
        for p in self.paragraphs:
            blocks.append((p.order, p.text))
        for a in self.algorithm_blocks:
            blocks.append((a.order, f"```{a.language}\n{a.text}\n```"))
        for c in self.captions:
            blocks.append((c.order, c.text))
        for e in self.equations:
            blocks.append((e.order, f"$$\n{e.source}\n$$"))
        for f_ in self.figure_assets:
            blocks.append((f_.order, f"![{f_.alt}]({f_.path})"))
        blocks.sort(key=lambda b: b[0])
        out = "\n\n".join(text for _, text in blocks)
        out += "\n\n## References\n\n"
        out += "\n".join(f"[{r.cite_key}] {r.raw}" for r in self.references)
        return out + "\n"


_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*\S)\s*$")
_CAPTION_RE = re.compile(r"^(Figure|Table)\s+\d+\s*:")
_FIGURE_RE = re.compile(r"^!\[([^\]]*)\]\(([^)]+)\)\s*$")
_REF_ENTRY_RE = re.compile(r"^\[([^\]\s]+)\]\s+(.*\S)\s*$")
_CITE_RE = re.compile(r"(?<!\!)\[([A-Za-z0-9_:.-]+)\]")


def parse_markdown(text: str, doc_id: str | None = None) -> PaperDocument:
    """Parse the markdown conventions above into a PaperDocument.

    Raises MalformedDocument for empty input, unclosed `$$`/``` fences,
    a missing references section, or duplicate citation keys.
    """
    if not text or not text.strip():
        raise MalformedDocument("empty document")
    lines = text.splitlines()
    doc = PaperDocument(id=doc_id or "doc")
    order = 0
    section = -1
    in_references = False
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        heading = _HEADING_RE.match(line)
        if heading:
            if re.fullmatch(r"references", heading.group(2).strip(), re.IGNORECASE):
                in_references = True
                i += 1
                continue
            in_references = False
            doc.headings.append(Heading(level=len(heading.group(1)), text=heading.group(2), order=order))
            section = len(doc.headings) - 1
            order += 1
            i += 1
            continue
        if in_references:
            entry = _REF_ENTRY_RE.match(line)
            if entry:
                doc.references.append(BibEntry(cite_key=entry.group(1), raw=entry.group(2)))
            i += 1
            continue
        if line.strip() == "$$":
            body: list[str] = []
            i += 1
            while i < len(lines) and lines[i].strip() != "$$":
                body.append(lines[i])
                i += 1
            if i >= len(lines):
                raise MalformedDocument("unclosed $$ equation fence")
            source = "\n".join(body).strip("\n")
            if not source.strip():
                raise MalformedDocument("empty equation block")
            doc.equations.append(Equation(source=source, index=len(doc.equations), section=section, order=order))
            order += 1
            i += 1
            continue
        if line.startswith("```"):
            language = line[3:].strip()
            body = []
            i += 1
            while i < len(lines) and not lines[i].startswith("```"):
                body.append(lines[i])
                i += 1
            if i >= len(lines):
                raise MalformedDocument("unclosed ``` fence")
            doc.algorithm_blocks.append(
                AlgorithmBlock(text="\n".join(body), language=language, section=section, order=order)
            )
            order += 1
            i += 1
            continue
        figure = _FIGURE_RE.match(line)
        if figure:
            doc.figure_assets.append(
                FigureAsset(path=figure.group(2), alt=figure.group(1), section=section, order=order)
            )
            order += 1
            i += 1
            continue
        if _CAPTION_RE.match(line):
            doc.captions.append(Caption(text=line.strip(), section=section, order=order))
            order += 1
            i += 1
            continue
        para_lines = [line]
        i += 1
        while i < len(lines) and lines[i].strip() and not _is_block_opener(lines[i]):
            para_lines.append(lines[i])
            i += 1
        doc.paragraphs.append(Paragraph(text="\n".join(para_lines), section=section, order=order))
        order += 1

    if not doc.references and not in_references:
        raise MalformedDocument("missing references section")
    keys = doc.reference_keys()
    duplicates = {k for k in keys if keys.count(k) > 1}
    if duplicates:
        raise MalformedDocument(f"duplicate citation keys: {sorted(duplicates)}")

    # Attach each figure to the caption that immediately follows it.
    for fi, fig in enumerate(doc.figure_assets):
        following = [
            (c.order, ci) for ci, c in enumerate(doc.captions)
            if c.section == fig.section and c.order > fig.order
        ]
        if following:
            doc.figure_assets[fi] = replace(fig, caption_index=min(following)[1])
    return doc


def _is_block_opener(line: str) -> bool:
    return bool(
        _HEADING_RE.match(line)
        or line.strip() == "$$"
        or line.startswith("```")
        or _FIGURE_RE.match(line)
        or _CAPTION_RE.match(line)
    )


def cited_keys(text: str) -> set[str]:
    return {m.group(1) for m in _CITE_RE.finditer(text)}


# ---------------------------------------------------------------------------
# Cleaning

ALWAYS_KEPT = ("abstract", "method", "methods", "experiments", "appendix")

_CLEAN_SCHEMA = {
    "type": "object",
    "properties": {"drop": {"type": "array", "items": {"type": "string"}}},
    "required": ["drop"],
}


def _always_kept(heading: str) -> bool:
    lowered = heading.strip().lower()
    return lowered in ALWAYS_KEPT or "algorithm" in lowered


def clean_document(doc: PaperDocument, gateway: LlmGateway) -> PaperDocument:
    """Drop sections the cleaning agent marks irrelevant.

    Mechanical preservation constraints are enforced afterwards: equation
    count unchanged, every algorithm block still present, and every citation
    key referenced by surviving text still resolvable. A violating cleanup
    raises PreservationViolation so the caller can keep the original.
    """
    listing = "\n".join(f"- {h.text}" for h in doc.headings)
    prompt = (
        "Identify sections of this paper that are irrelevant for implementing the method "
        "(extended introductions, related work discussions, acknowledgements). "
        "Return JSON {\"drop\": [section titles]}.\n\nSections:\n" + listing
    )
    response = gateway.complete(simple_request(prompt, tag="clean", schema=_CLEAN_SCHEMA,
                                               model_id=gateway.model_id("text")))
    requested = set(response.structured["drop"]) if response.structured else set()
    drop_sections = {
        i for i, h in enumerate(doc.headings)
        if h.text in requested and not _always_kept(h.text)
    }
    if not drop_sections:
        return doc

    keep_map: dict[int, int] = {}
    new_headings: list[Heading] = []
    for i, h in enumerate(doc.headings):
        if i not in drop_sections:
            keep_map[i] = len(new_headings)
            new_headings.append(h)

    def remap(section: int) -> int | None:
        if section == -1:
            return -1
        return keep_map.get(section)

    cleaned = PaperDocument(id=doc.id, headings=new_headings)
    for p in doc.paragraphs:
        sec = remap(p.section)
        if sec is not None:
            cleaned.paragraphs.append(replace(p, section=sec))
    for a in doc.algorithm_blocks:
        sec = remap(a.section)
        if sec is not None:
            cleaned.algorithm_blocks.append(replace(a, section=sec))
    for c in doc.captions:
        sec = remap(c.section)
        if sec is not None:
            cleaned.captions.append(replace(c, section=sec))
    for e in doc.equations:
        sec = remap(e.section)
        if sec is not None:
            cleaned.equations.append(replace(e, section=sec))
    for f_ in doc.figure_assets:
        sec = remap(f_.section)
        if sec is not None:
            cleaned.figure_assets.append(replace(f_, section=sec))
    cleaned.equations = [replace(e, index=i) for i, e in enumerate(cleaned.equations)]

    surviving_text = cleaned.body_text()
    cited_before = {k for k in cited_keys(doc.body_text()) if k in set(doc.reference_keys())}
    cited_now = {k for k in cited_keys(surviving_text)}
    for entry in doc.references:
        if entry.cite_key in cited_now or entry.cite_key not in cited_before:
            cleaned.references.append(entry)

    if len(cleaned.equations) != len(doc.equations):
        raise PreservationViolation("cleaning dropped equations")
    if {a.text for a in cleaned.algorithm_blocks} != {a.text for a in doc.algorithm_blocks}:
        raise PreservationViolation("cleaning dropped algorithm blocks")
    kept_keys = set(cleaned.reference_keys())
    missing = {k for k in cited_now if k in set(doc.reference_keys())} - kept_keys
    if missing:
        raise PreservationViolation(f"cleaning dropped cited references: {sorted(missing)}")
    if len(cleaned.to_markdown()) > len(doc.to_markdown()):
        raise PreservationViolation("cleaning increased document length")
    return cleaned


def check_preserved(original: PaperDocument, candidate: PaperDocument) -> None:
    """Raise PreservationViolation when a rewritten document lost content."""
    if len(candidate.equations) != len(original.equations):
        raise PreservationViolation("equation count changed")
    if {a.text for a in candidate.algorithm_blocks} != {a.text for a in original.algorithm_blocks}:
        raise PreservationViolation("algorithm blocks changed")
    cited_now = cited_keys(candidate.body_text()) & set(original.reference_keys())
    missing = cited_now - set(candidate.reference_keys())
    if missing:
        raise PreservationViolation(f"cited references missing: {sorted(missing)}")


# ---------------------------------------------------------------------------
# Abstract completeness

DOMAIN_LEXICON = {
    "loss", "losses", "sampling", "sampler", "encoder", "encoding", "field", "fields",
    "network", "networks", "grid", "grids", "rendering", "representation", "factorization",
    "regularization", "embedding", "embeddings", "codes", "decomposition", "octree",
    "density", "radiance", "prior", "schedule", "contraction",
}

_STOPWORDS = {
    "the", "a", "an", "of", "from", "and", "or", "we", "our", "this", "that", "with",
    "for", "to", "in", "on", "by", "is", "are", "new", "novel", "propose", "present",
    "introduce", "via", "using",
}

_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z0-9-]*")


def abstract_keyphrases(doc: PaperDocument) -> list[str]:
    """Technical keyphrases of the abstract: multi-token noun phrases whose
    head is a domain term, e.g. "distortion loss" or "proposal sampling"."""
    text = " ".join(p.text for p in doc.abstract_paragraphs())
    phrases: list[str] = []
    for sentence in re.split(r"[.,;:!?]", text):
        tokens = _TOKEN_RE.findall(sentence)
        for i, token in enumerate(tokens):
            if token.lower() not in DOMAIN_LEXICON:
                continue
            j = i
            while j > 0 and (i - j) < 2 and tokens[j - 1].lower() not in _STOPWORDS:
                j -= 1
            if j < i:
                phrase = " ".join(t.lower() for t in tokens[j : i + 1])
                if phrase not in phrases:
                    phrases.append(phrase)
    return phrases


def validate_completeness(doc: PaperDocument) -> list[str]:
    """Abstract keyphrases that never appear in the body (advisory)."""
    abstract_sections = {p.section for p in doc.abstract_paragraphs()}
    body = doc.body_text(exclude_sections=abstract_sections).lower()
    body = re.sub(r"[-\s]+", " ", body)
    findings = []
    for phrase in abstract_keyphrases(doc):
        needle = re.sub(r"[-\s]+", " ", phrase)
        if needle not in body:
            findings.append(phrase)
    return findings
