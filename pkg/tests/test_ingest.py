import json

import pytest

from nerfsynth.gateway import GatewayConfig, LlmGateway
from nerfsynth.ingest import (
    MalformedDocument,
    PreservationViolation,
    abstract_keyphrases,
    clean_document,
    parse_markdown,
    validate_completeness,
)

THREE_HEADING_DOC = """# Title

Year: 2023. Intro paragraph about a distortion loss and proposal sampling.

## Method

The core update rule:

$$
x_{t+1} = x_t - \\eta g_t
$$

With a schedule:

$$
\\eta_t = \\eta_0 / (1 + t)
$$

## Results

Figure 1: Convergence on the synthetic scenes.

![overview](figures/overview.png)

## References

[alpha] First cited work. 2020.
[beta] Second cited work. 2021.
[gamma] Third cited work. 2019.
[delta] Fourth cited work. 2018.
[epsilon] Fifth cited work. 2022.
"""


def gw(tmp_path, script):
    p = tmp_path / "script.json"
    p.write_text(json.dumps(script))
    return LlmGateway(GatewayConfig(mode="mock", script_path=str(p)))


class TestParseMarkdown:
    def test_counts(self):
        doc = parse_markdown(THREE_HEADING_DOC)
        assert len(doc.headings) == 3
        assert len(doc.equations) == 2
        assert len(doc.references) == 5

    def test_empty_is_malformed(self):
        with pytest.raises(MalformedDocument):
            parse_markdown("")

    def test_unclosed_equation_fence(self):
        with pytest.raises(MalformedDocument):
            parse_markdown("# T\n\n$$\nx = 1\n\n## References\n\n[a] A. 2020.\n")

    def test_missing_references(self):
        with pytest.raises(MalformedDocument):
            parse_markdown("# T\n\nJust text.\n")

    def test_duplicate_cite_keys(self):
        text = "# T\n\nbody\n\n## References\n\n[a] One. 2020.\n[a] Two. 2021.\n"
        with pytest.raises(MalformedDocument):
            parse_markdown(text)

    def test_algorithm_blocks_and_captions(self):
        text = (
            "# T\n\n```pseudo\nfor i in rays: march(i)\n```\n\n"
            "Table 2: Ablations.\n\n## References\n\n[a] A. 2020.\n"
        )
        doc = parse_markdown(text)
        assert doc.algorithm_blocks[0].text == "for i in rays: march(i)"
        assert doc.captions[0].text == "Table 2: Ablations."

    def test_figure_asset_links_to_caption(self):
        doc = parse_markdown(THREE_HEADING_DOC)
        assert doc.figure_assets[0].path == "figures/overview.png"
        # Caption precedes the figure here, so no forward link exists.
        assert doc.figure_assets[0].caption_index is None

    def test_bib_entry_fields(self):
        doc = parse_markdown(THREE_HEADING_DOC)
        entry = doc.references[0]
        assert entry.cite_key == "alpha"
        assert entry.year == 2020
        assert entry.title == "First cited work"

    def test_round_trip_stability(self):
        doc = parse_markdown(THREE_HEADING_DOC, doc_id="t")
        again = parse_markdown(doc.to_markdown(), doc_id="t")
        assert again == doc

    def test_round_trip_minimal_fixture(self, fixtures_dir):
        text = (fixtures_dir / "papers" / "minimal.md").read_text()
        doc = parse_markdown(text, doc_id="minimal")
        assert parse_markdown(doc.to_markdown(), doc_id="minimal") == doc

    def test_indices_stable_under_reparse(self):
        doc_a = parse_markdown(THREE_HEADING_DOC)
        doc_b = parse_markdown(THREE_HEADING_DOC)
        assert [e.index for e in doc_a.equations] == [e.index for e in doc_b.equations]


class TestCleanDocument:
    RELATED_WORK_DOC = THREE_HEADING_DOC.replace(
        "## Results",
        "## Related Work\n\nMany prior systems exist [delta].\n\n## Results",
    )

    def test_drops_marked_section(self, tmp_path):
        doc = parse_markdown(self.RELATED_WORK_DOC)
        gateway = gw(tmp_path, {"clean": [{"drop": ["Related Work"]}]})
        cleaned = clean_document(doc, gateway)
        assert cleaned.section_index("Related Work") is None
        assert len(cleaned.equations) == len(doc.equations)

    def test_never_increases_length(self, tmp_path):
        doc = parse_markdown(self.RELATED_WORK_DOC)
        gateway = gw(tmp_path, {"clean": [{"drop": ["Related Work"]}]})
        cleaned = clean_document(doc, gateway)
        assert len(cleaned.to_markdown()) <= len(doc.to_markdown())

    def test_no_removable_sections_identity(self, tmp_path):
        doc = parse_markdown(THREE_HEADING_DOC)
        gateway = gw(tmp_path, {"clean": [{"drop": []}]})
        assert clean_document(doc, gateway) == doc

    def test_always_kept_sections_survive(self, tmp_path):
        doc = parse_markdown(THREE_HEADING_DOC)
        gateway = gw(tmp_path, {"clean": [{"drop": ["Method"]}]})
        cleaned = clean_document(doc, gateway)
        assert cleaned.section_index("Method") is not None

    def test_equation_loss_is_a_violation(self, tmp_path):
        # "Results" carries no equations; force a drop of a section that does.
        text = THREE_HEADING_DOC.replace("## Method", "## Extra Analysis")
        doc = parse_markdown(text)
        gateway = gw(tmp_path, {"clean": [{"drop": ["Extra Analysis"]}]})
        with pytest.raises(PreservationViolation):
            clean_document(doc, gateway)

    def test_uncited_reference_pruned_when_its_section_drops(self, tmp_path):
        doc = parse_markdown(self.RELATED_WORK_DOC)
        gateway = gw(tmp_path, {"clean": [{"drop": ["Related Work"]}]})
        cleaned = clean_document(doc, gateway)
        assert "delta" not in cleaned.reference_keys()
        assert "alpha" in cleaned.reference_keys()


class TestCompleteness:
    def test_present_phrase_not_reported(self):
        text = (
            "# T\n\n## Abstract\n\nWe add a distortion loss to the objective.\n\n"
            "## Method\n\nThe distortion loss is computed per ray.\n\n"
            "## References\n\n[a] A. 2020.\n"
        )
        assert validate_completeness(parse_markdown(text)) == []

    def test_removed_phrase_reported(self):
        text = (
            "# T\n\n## Abstract\n\nWe rely on proposal sampling for efficiency.\n\n"
            "## Method\n\nDensities are predicted directly.\n\n"
            "## References\n\n[a] A. 2020.\n"
        )
        assert validate_completeness(parse_markdown(text)) == ["proposal sampling"]

    def test_two_of_three_present(self):
        text = (
            "# T\n\n## Abstract\n\nOur hash encoding, distortion loss and proposal sampling "
            "combine into one pipeline.\n\n"
            "## Method\n\nThe hash encoding feeds the field; the distortion loss "
            "regularizes weights.\n\n"
            "## References\n\n[a] A. 2020.\n"
        )
        doc = parse_markdown(text)
        assert len(abstract_keyphrases(doc)) == 3
        assert validate_completeness(doc) == ["proposal sampling"]

    def test_findings_subset_of_keyphrases(self):
        doc = parse_markdown(THREE_HEADING_DOC)
        findings = validate_completeness(doc)
        assert set(findings) <= set(abstract_keyphrases(doc))
