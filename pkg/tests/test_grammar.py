import json
from dataclasses import dataclass, field

import pytest

from nerfsynth.artifacts import load_interfaces, load_repo_files
from nerfsynth.grammar import (
    GrammarError,
    NoDerivation,
    UnifyMismatch,
    load_grammar,
    derive_plan,
    parse_signature,
    unify_shapes,
    validate_repository,
)
from nerfsynth.repograph import FileRecord


@dataclass
class FakeComponent:
    kind: str
    name: str
    equations: tuple = ()
    excerpt: str = "excerpt"


@pytest.fixture(scope="module")
def grammar():
    return load_grammar()


@pytest.fixture
def gold(gold_repo_dir):
    files = load_repo_files(gold_repo_dir)
    interfaces = load_interfaces(gold_repo_dir)
    return files, interfaces


class TestLoadGrammar:
    def test_default_grammar_shape(self, grammar):
        assert grammar.start == "Plugin"
        assert len(grammar.roles()) >= 6
        assert "Model" in grammar.contracts

    def test_undeclared_symbol(self):
        text = "Plugin := Config Foo\ncontract Config export method_spec\n"
        with pytest.raises(GrammarError) as err:
            load_grammar(text)
        assert "Foo" in str(err.value)

    def test_unreachable_role(self):
        text = (
            "Plugin := Config\n"
            "Orphan := Config\n"
            "contract Config export method_spec\n"
        )
        with pytest.raises(GrammarError) as err:
            load_grammar(text)
        assert "unreachable" in str(err.value)

    def test_duplicate_contract(self):
        text = (
            "Plugin := Config\n"
            "contract Config export method_spec\n"
            "contract Config export method_spec\n"
        )
        with pytest.raises(GrammarError):
            load_grammar(text)

    def test_contract_for_symbol_outside_productions(self):
        text = "Plugin := Config\ncontract Config export x\ncontract Ghost export y\n"
        with pytest.raises(GrammarError):
            load_grammar(text)


class TestDerivable:
    def test_minimal_multiset(self, grammar):
        assert grammar.derivable(["Config", "DataManager", "Model", "Pipeline"])

    def test_gold_multiset(self, grammar, gold):
        files, _ = gold
        assert grammar.derivable([f.role for f in files])

    def test_missing_required_role(self, grammar):
        assert not grammar.derivable(["Config", "DataManager", "Model"])

    def test_duplicate_singleton_role(self, grammar):
        assert not grammar.derivable(["Config", "Config", "DataManager", "Model", "Pipeline"])

    def test_dataparser_requires_datamanager_slot(self, grammar):
        assert grammar.derivable(["Config", "DataManager", "DataParser", "Model", "Pipeline"])
        assert not grammar.derivable(["Config", "DataParser", "Model", "Pipeline"])

    def test_matches_enumeration_oracle(self, grammar):
        # Independent oracle: enumerate candidate multisets over the role
        # alphabet up to 2 per role and compare against a hand recursion.
        roles = ["Config", "DataManager", "DataParser", "Field", "Encoder", "Sampler", "Model", "Pipeline", "Loss"]

        def oracle(counts):
            need_one = ["Config", "DataManager", "Model", "Pipeline"]
            if any(counts.get(r, 0) != 1 for r in need_one):
                return False
            if counts.get("Field", 0) > 1:
                return False
            if counts.get("DataParser", 0) > 1:
                return False
            known = set(roles)
            return all(r in known for r in counts)

        import itertools

        for combo in itertools.product(range(3), repeat=len(roles)):
            counts = {r: c for r, c in zip(roles, combo) if c}
            multiset = [r for r, c in counts.items() for _ in range(c)]
            if sum(combo) > 9:
                continue
            assert grammar.derivable(multiset) == oracle(counts), counts


class TestUnifyShapes:
    def test_identity(self):
        a = parse_signature("f(x[R,3]) -> [R,3]")
        out = unify_shapes(a, a)
        assert isinstance(out, dict)
        assert out["R"] == "R"

    def test_single_binding_forced(self):
        a = parse_signature("f() -> [R,3]")
        b = parse_signature("f() -> [512,3]")
        out = unify_shapes(a, b)
        assert out == {"R": 512}

    def test_mismatch_position(self):
        a = parse_signature("f() -> [R,3]")
        b = parse_signature("f() -> [N,4]")
        out = unify_shapes(a, b)
        assert isinstance(out, UnifyMismatch)
        assert "dim 2" in out.position

    def test_shared_symbol_chains(self):
        a = parse_signature("f(x[R,R]) -> [R]")
        b = parse_signature("f(x[N,512]) -> [N]")
        out = unify_shapes(a, b)
        assert isinstance(out, dict)
        assert out["R"] == 512 and out["N"] == 512

    def test_symmetry_random(self):
        import random

        rng = random.Random(3)
        symbols = ["R", "S", "N", "4", "8"]
        for _ in range(200):
            dims_a = [rng.choice(symbols) for _ in range(3)]
            dims_b = [rng.choice(symbols) for _ in range(3)]

            def sig(dims):
                return parse_signature("f() -> [" + ",".join(dims) + "]")

            fwd = unify_shapes(sig(dims_a), sig(dims_b))
            rev = unify_shapes(sig(dims_b), sig(dims_a))
            assert isinstance(fwd, dict) == isinstance(rev, dict)

    def test_named_result_key_mismatch(self):
        a = parse_signature("f() -> {rgb:[R,3]}")
        b = parse_signature("f() -> {rgba:[R,4]}")
        assert isinstance(unify_shapes(a, b), UnifyMismatch)


class TestDerivePlan:
    def test_three_components(self, grammar):
        components = [
            FakeComponent("architectural-module", "hash encoder"),
            FakeComponent("architectural-module", "proposal sampler"),
            FakeComponent("loss-function", "distortion loss"),
        ]
        plan = derive_plan(grammar, components)
        assert set(plan.roles()) == {"Config", "DataManager", "Field", "Encoder", "Sampler", "Model", "Pipeline"}

    def test_no_components_minimal(self, grammar):
        plan = derive_plan(grammar, [])
        assert sorted(plan.roles()) == ["Config", "DataManager", "Model", "Pipeline"]

    def test_unknown_kind(self, grammar):
        with pytest.raises(NoDerivation):
            derive_plan(grammar, [FakeComponent("dataset", "thing")])

    def test_loss_with_equation_gets_node(self, grammar):
        components = [FakeComponent("loss-function", "ray entropy loss", equations=("e1",))]
        plan = derive_plan(grammar, components)
        assert "Loss" in plan.roles()

    def test_plan_edges_respect_flow(self, grammar):
        components = [FakeComponent("architectural-module", "hash encoder")]
        plan = derive_plan(grammar, components)
        paths = dict(plan.nodes)
        assert (paths["Encoder"], paths["Field"]) in [tuple(e) for e in plan.edges]


def _drop_export(interfaces, file_id, name):
    iface = interfaces[file_id]
    iface.exports = [(n, s) for n, s in iface.exports if n != name]


def _set_export_sig(interfaces, file_id, name, sig_text):
    iface = interfaces[file_id]
    iface.exports = [
        (n, parse_signature(n + sig_text) if n == name else s) for n, s in iface.exports
    ]


def _append_source(files, file_id, line):
    for i, rec in enumerate(files):
        if rec.file_id == file_id:
            files[i] = FileRecord(rec.file_id, rec.path, rec.role, rec.source + line)


MUTATIONS = [
    ("drop_model_get_outputs", "model.py", "missing-export"),
    ("drop_model_get_loss_dict", "model.py", "missing-export"),
    ("drop_field_get_density", "field.py", "missing-export"),
    ("drop_config_method_spec", "config.py", "missing-export"),
    ("field_imports_pipeline", "field.py", "illegal-import"),
    ("sampler_imports_model", "sampler_proposal.py", "illegal-import"),
    ("encoder_cycle", "encoder_sh.py", "cycle"),
    ("corrupt_model_rgb_shape", "model.py", "shape-mismatch"),
    ("corrupt_field_density_shape", "field.py", "shape-mismatch"),
    ("undeclared_role_file", "visualizer.py", "unknown-role"),
]


def _apply_mutation(name, files, interfaces):
    if name == "drop_model_get_outputs":
        _drop_export(interfaces, "model.py", "get_outputs")
    elif name == "drop_model_get_loss_dict":
        _drop_export(interfaces, "model.py", "get_loss_dict")
    elif name == "drop_field_get_density":
        _drop_export(interfaces, "field.py", "get_density")
    elif name == "drop_config_method_spec":
        _drop_export(interfaces, "config.py", "method_spec")
    elif name == "field_imports_pipeline":
        _append_source(files, "field.py", "from .pipeline import PluginPipeline\n")
    elif name == "sampler_imports_model":
        _append_source(files, "sampler_proposal.py", "from .model import PluginModel\n")
    elif name == "encoder_cycle":
        _append_source(files, "encoder_sh.py", "from .encoder_hash import HashEncoder\n")
    elif name == "corrupt_model_rgb_shape":
        _set_export_sig(interfaces, "model.py", "get_outputs", "(ray_bundle[R]) -> {rgb:[R,4], depth:[R,1]}")
    elif name == "corrupt_field_density_shape":
        _set_export_sig(interfaces, "field.py", "get_density", "(positions[R,S,3]) -> [R,S,3]")
    elif name == "undeclared_role_file":
        files.append(FileRecord("visualizer.py", "visualizer.py", "Visualizer", "X = 1\n"))
    else:
        raise AssertionError(name)


class TestValidateRepository:
    def test_gold_skeleton_passes(self, grammar, gold):
        files, interfaces = gold
        report = validate_repository(grammar, files, interfaces)
        assert report.passed, report.to_json()

    @pytest.mark.parametrize("name,mutated_file,rule", MUTATIONS, ids=[m[0] for m in MUTATIONS])
    def test_single_mutation_single_violation(self, grammar, gold_repo_dir, name, mutated_file, rule):
        files = load_repo_files(gold_repo_dir)
        interfaces = load_interfaces(gold_repo_dir)
        _apply_mutation(name, files, interfaces)
        report = validate_repository(grammar, files, interfaces)
        assert not report.passed
        assert len(report.violations) == 1, report.to_json()
        violation = report.violations[0]
        assert violation.file == mutated_file
        assert violation.rule == rule

    def test_report_serialization(self, grammar, gold):
        files, interfaces = gold
        report = validate_repository(grammar, files, interfaces)
        data = json.loads(report.to_json())
        assert data == {"pass": True, "violations": []}

    def test_missing_role_is_underivable(self, grammar, gold):
        files, interfaces = gold
        files = [f for f in files if f.file_id != "model.py"]
        report = validate_repository(grammar, files, interfaces)
        rules = {v.rule for v in report.violations}
        assert "underivable-roles" in rules

    def test_unknown_import_name(self, grammar, gold):
        files, interfaces = gold
        interfaces["pipeline.py"].imports.append(("not_exported", "model.py"))
        report = validate_repository(grammar, files, interfaces)
        assert any(v.rule == "unknown-import-name" and v.file == "pipeline.py" for v in report.violations)
