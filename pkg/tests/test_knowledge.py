import json

import pytest

from nerfsynth.artifacts import tree_bytes
from nerfsynth.fetch import FixtureFetcher, NotFound
from nerfsynth.grammar import load_grammar
from nerfsynth.ingest import parse_markdown
from nerfsynth.knowledge import DuplicateId, InvalidExemplar, KnowledgeBase, store_pair


@pytest.fixture(scope="module")
def grammar():
    return load_grammar()


@pytest.fixture
def doc(fixtures_dir):
    return parse_markdown((fixtures_dir / "papers" / "minimal.md").read_text(), doc_id="minimal")


class TestKnowledgeBase:
    def test_store_and_reload(self, tmp_path, grammar, doc, gold_repo_dir):
        kb = KnowledgeBase(root=tmp_path / "kb", grammar=grammar)
        store_pair(kb, doc, gold_repo_dir)
        assert len(kb) == 1
        index = json.loads((tmp_path / "kb" / "index.json").read_text())
        assert index[0]["id"] == "minimal"
        assert set(index[0]) == {"id", "title", "year", "roles", "path"}
        assert index[0]["year"] == 2024

        reloaded = KnowledgeBase.load(tmp_path / "kb", grammar)
        assert len(reloaded) == 1
        assert reloaded.entries["minimal"].roles == sorted(
            {"Config", "DataManager", "DataParser", "Encoder", "Field", "Loss", "Model", "Pipeline", "Sampler"}
        )

    def test_round_trip_byte_identical(self, tmp_path, grammar, doc, gold_repo_dir):
        kb = KnowledgeBase(root=tmp_path / "kb", grammar=grammar)
        store_pair(kb, doc, gold_repo_dir)
        assert tree_bytes(kb.repo_dir("minimal")) == tree_bytes(gold_repo_dir)

    def test_duplicate_id(self, tmp_path, grammar, doc, gold_repo_dir):
        kb = KnowledgeBase(root=tmp_path / "kb", grammar=grammar)
        store_pair(kb, doc, gold_repo_dir)
        with pytest.raises(DuplicateId):
            store_pair(kb, doc, gold_repo_dir)

    def test_invalid_exemplar_cyclic_repo(self, tmp_path, grammar, doc, gold_repo_dir):
        import shutil

        bad = tmp_path / "bad_repo"
        shutil.copytree(gold_repo_dir, bad)
        src = (bad / "encoder_sh.py").read_text()
        (bad / "encoder_sh.py").write_text("from .encoder_hash import HashEncoder\n" + src)
        kb = KnowledgeBase(root=tmp_path / "kb", grammar=grammar)
        with pytest.raises(InvalidExemplar):
            store_pair(kb, doc, bad)
        assert len(kb) == 0

    def test_role_overlap_ranking(self, tmp_path, grammar, doc, gold_repo_dir):
        kb = KnowledgeBase(root=tmp_path / "kb", grammar=grammar)
        store_pair(kb, doc, gold_repo_dir)
        top = kb.top_by_role_overlap(["Config", "Model", "Encoder"], k=2)
        assert [e.id for e in top] == ["minimal"]


class TestFixtureFetcher:
    def test_fetch_known_paper(self, fixtures_dir):
        fetcher = FixtureFetcher(fixtures_dir / "kplanes" / "graph.json")
        doc = fetcher.fetch_key("mipnerf360")
        assert doc.id == "mipnerf360"
        assert len(doc.equations) == 1

    def test_not_found(self, fixtures_dir):
        fetcher = FixtureFetcher(fixtures_dir / "kplanes" / "graph.json")
        with pytest.raises(NotFound):
            fetcher.fetch_key("unknown-paper")

    def test_synthesized_stub_from_cites(self, tmp_path):
        (tmp_path / "graph.json").write_text(json.dumps({"papers": {}, "cites": {"a": ["b"], "b": []}}))
        fetcher = FixtureFetcher(tmp_path / "graph.json")
        doc = fetcher.fetch_key("a")
        assert doc.reference_keys() == ["b"]
        assert "module b" in doc.body_text()
