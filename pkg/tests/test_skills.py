import json

import pytest
from hypothesis import given, settings, strategies as st

from opsloop.core import canonical_dumps
from opsloop.errors import NotFound, SeedError, StaleVersion, ValidationFailure
from opsloop.skills import Skill, SkillPool, diff_components, match_score

from conftest import make_event, skill_doc


def make_pool(docs, directory=None) -> SkillPool:
    pool = SkillPool(directory=directory)
    for doc in docs:
        pool.put(Skill.from_dict(doc))
    return pool


def brute_force_match(event, skills):
    """Independent oracle: filter on business+module coverage, score by tag
    intersection, sort by (score desc, version desc, id asc)."""
    heads = {}
    for s in skills:
        cur = heads.get(s.meta.skill_id)
        if cur is None or s.meta.version > cur.meta.version:
            heads[s.meta.skill_id] = s
    required = {event.business, event.module}
    rows = []
    for s in heads.values():
        if not required <= set(s.meta.tags):
            continue
        score = len(set(s.meta.tags) & event.tag_set())
        rows.append((score, s))
    rows.sort(key=lambda t: (-t[0], -t[1].meta.version, t[1].meta.skill_id))
    return [s for _, s in rows]


class TestMatch:
    def test_spec_example_two_matches_in_score_order(self):
        docs = [
            skill_doc("s-four", tags=("ecom-search", "recall", "alert", "availability")),
            skill_doc("s-two", tags=("ecom-search", "recall")),
            skill_doc("u-1", tags=("ads-dsp", "bidder")),
            skill_doc("u-2", tags=("ecom-search", "ranking")),
            skill_doc("u-3", tags=("video-feed", "recall")),
        ]
        pool = make_pool(docs)
        event = make_event()
        matched = pool.match(event)
        assert [s.meta.skill_id for s in matched] == ["s-four", "s-two"]
        assert match_score(event, matched[0]) == 4
        assert match_score(event, matched[1]) == 2

    def test_empty_pool(self):
        assert SkillPool().match(make_event()) == []

    def test_tie_break_by_skill_id(self):
        docs = [
            skill_doc("b-skill", tags=("ecom-search", "recall", "alert")),
            skill_doc("a-skill", tags=("ecom-search", "recall", "alert")),
        ]
        pool = make_pool(docs)
        assert [s.meta.skill_id for s in pool.match(make_event())] == ["a-skill", "b-skill"]

    def test_insertion_order_invariance(self):
        docs = [
            skill_doc("s1", tags=("ecom-search", "recall", "alert")),
            skill_doc("s2", tags=("ecom-search", "recall")),
            skill_doc("s3", tags=("ecom-search", "recall", "availability")),
        ]
        a = make_pool(docs).match(make_event())
        b = make_pool(list(reversed(docs))).match(make_event())
        assert [s.meta.skill_id for s in a] == [s.meta.skill_id for s in b]

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_matches_brute_force_oracle(self, data):
        tag_pool = ["ecom-search", "ads-dsp", "recall", "ranking", "alert", "inspection", "availability", "gmv"]
        n = data.draw(st.integers(min_value=0, max_value=8))
        docs = []
        for i in range(n):
            tags = data.draw(st.sets(st.sampled_from(tag_pool), min_size=1, max_size=5))
            docs.append(skill_doc(f"s{i}", tags=tuple(tags)))
        pool = make_pool(docs)
        event = make_event(
            business=data.draw(st.sampled_from(["ecom-search", "ads-dsp"])),
            module=data.draw(st.sampled_from(["recall", "ranking"])),
        )
        expected = brute_force_match(event, [Skill.from_dict(d) for d in docs])
        assert [s.meta.skill_id for s in pool.match(event)] == [s.meta.skill_id for s in expected]
        # quantified guarantee: every result shares business+module tags
        for s in pool.match(event):
            assert {event.business, event.module} <= set(s.meta.tags)


class TestPut:
    def test_new_skill_stored_at_v1(self):
        pool = SkillPool()
        assert pool.put(Skill.from_dict(skill_doc("s"))) == ("s", 1)

    def test_sequential_update(self):
        pool = make_pool([skill_doc("s")])
        pool.put(Skill.from_dict(skill_doc("s", version=2)))
        pool.put(Skill.from_dict(skill_doc("s", version=3)))
        assert pool.put(Skill.from_dict(skill_doc("s", version=4)))[1] == 4

    def test_stale_version_rejected(self):
        pool = make_pool([skill_doc("s"), skill_doc("s", version=2), skill_doc("s", version=3)])
        with pytest.raises(StaleVersion):
            pool.put(Skill.from_dict(skill_doc("s", version=3)))

    def test_new_skill_must_start_at_v1(self):
        with pytest.raises(StaleVersion):
            SkillPool().put(Skill.from_dict(skill_doc("s", version=2)))

    def test_history_append_only(self):
        pool = make_pool([skill_doc("s", steps=["Original step."])])
        v1_doc = canonical_dumps(pool.get("s", 1).to_dict())
        pool.put(Skill.from_dict(skill_doc("s", version=2, steps=["Changed step."])))
        assert canonical_dumps(pool.get("s", 1).to_dict()) == v1_doc

    def test_get_missing(self):
        with pytest.raises(NotFound):
            SkillPool().get("ghost")


class TestSeedReset:
    def test_seed_dir(self, tmp_path):
        for i in range(4):
            (tmp_path / f"s{i}.json").write_text(json.dumps(skill_doc(f"s{i}")))
        pool = SkillPool()
        pool.put(Skill.from_dict(skill_doc("pre-existing")))
        assert pool.reset_to_seed(tmp_path) == 4
        assert pool.size() == 4
        assert all(s.meta.version == 1 for s in pool.heads())

    def test_empty_seed_dir(self, tmp_path):
        pool = make_pool([skill_doc("s")])
        assert pool.reset_to_seed(tmp_path) == 0
        assert pool.size() == 0

    def test_malformed_seed_names_file(self, tmp_path):
        bad = tmp_path / "broken.json"
        bad.write_text("{not json")
        with pytest.raises(SeedError) as err:
            SkillPool().reset_to_seed(tmp_path)
        assert "broken.json" in str(err.value)

    def test_reset_isolation(self, tmp_path):
        (tmp_path / "seed.json").write_text(json.dumps(skill_doc("seeded")))
        pool = SkillPool()
        pool.reset_to_seed(tmp_path)
        baseline = pool.snapshot()
        pool.put(Skill.from_dict(skill_doc("generated-later")))
        pool.put(Skill.from_dict(skill_doc("seeded", version=2)))
        pool.reset_to_seed(tmp_path)
        assert pool.snapshot() == baseline


class TestPersistence:
    def test_directory_layout_and_reload(self, tmp_path):
        pool = SkillPool(directory=str(tmp_path / "pool"))
        pool.put(Skill.from_dict(skill_doc("s")))
        pool.put(Skill.from_dict(skill_doc("s", version=2)))
        assert (tmp_path / "pool" / "s" / "v1.json").exists()
        assert (tmp_path / "pool" / "s" / "v2.json").exists()
        reloaded = SkillPool(directory=str(tmp_path / "pool"))
        assert reloaded.latest_version("s") == 2


class TestInvariantsAndDiff:
    def test_prompt_placeholder_must_be_declared(self):
        doc = skill_doc(steps=["Look at {data.metric:ghost:latency}."])
        with pytest.raises(ValidationFailure):
            Skill.from_dict(doc)

    def test_knowledge_placeholder_must_be_declared(self):
        doc = skill_doc(steps=["Check {knowledge.vector} hints."])
        with pytest.raises(ValidationFailure):
            Skill.from_dict(doc)

    def test_top_k_bounds(self):
        doc = skill_doc(knowledge_queries=[{"index": "vector", "query_text": "x", "top_k": 21}])
        with pytest.raises(ValidationFailure):
            Skill.from_dict(doc)

    def test_diff_prompt_only(self):
        old = Skill.from_dict(skill_doc("s", steps=["Step one."]))
        new = Skill.from_dict(skill_doc("s", version=2, steps=["Step one.", "Step two."]))
        diff = diff_components(old, new)
        assert diff["load_data_schema"] == []
        assert diff["prompt"] != []
        assert any(c["path"].startswith("steps") for c in diff["prompt"])
