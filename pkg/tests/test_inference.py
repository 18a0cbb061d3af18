import dataclasses

import numpy as np
import pytest

from defex.corpus import Document, EventOntology
from defex.encoder import CONTEXT, DEFINITION
from defex.errors import ArgumentError, DegenerateVectorError, FingerprintError, ValidationError
from defex.inference import (
    CallCounter,
    DefinitionIndex,
    InferenceConfig,
    build_definition_index,
    counter_report,
    extract,
    score_mention,
    simulate_joint_baseline,
    threshold_sweep,
)


class TestInferenceConfig:
    def test_default(self):
        assert InferenceConfig().threshold == 0.7

    @pytest.mark.parametrize("t", [-1.0, 1.0, 1.5])
    def test_threshold_bounds(self, t):
        with pytest.raises(ArgumentError):
            InferenceConfig(threshold=t)


class TestCallCounter:
    def test_records(self):
        counter = CallCounter()
        counter.record(CONTEXT, 3)
        counter.record(DEFINITION)
        assert counter.context_encoder_calls == 3
        assert counter.definition_encoder_calls == 1

    def test_unknown_side(self):
        with pytest.raises(ArgumentError):
            CallCounter().record("middle")


class TestBuildIndex:
    def test_empty_ontology(self, tiny_model):
        with pytest.raises(ArgumentError):
            build_definition_index(tiny_model, EventOntology(()))

    def test_singleton(self, tiny_model, tiny_world):
        _, ontology, _, _ = tiny_world
        single = EventOntology(ontology.types[:1])
        counter = CallCounter()
        index = build_definition_index(tiny_model, single, counter=counter)
        assert index.vectors.shape[0] == 1
        assert counter.definition_encoder_calls == 1

    def test_rebuild_identical(self, tiny_model, tiny_world):
        _, ontology, _, _ = tiny_world
        one = build_definition_index(tiny_model, ontology)
        two = build_definition_index(tiny_model, ontology)
        np.testing.assert_array_equal(one.vectors, two.vectors)

    def test_one_call_per_type_at_scale(self, tiny_model):
        # the reference corpus size for this check: 168 target types
        types = tuple((f"t{i:03d}", (f"qq{i:03d}", "sense")) for i in range(168))
        ontology = EventOntology(types)
        counter = CallCounter()
        build_definition_index(tiny_model, ontology, counter=counter)
        assert counter.definition_encoder_calls == 168

    def test_vector_count_validated(self, tiny_world, tiny_model):
        _, ontology, _, _ = tiny_world
        with pytest.raises(ValidationError):
            DefinitionIndex(ontology, np.ones((1, 8)), "fp")

    def test_save_load_roundtrip(self, tiny_model, tiny_world, tmp_path):
        _, ontology, _, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        path = tmp_path / "index.npz"
        index.save(path)
        loaded = DefinitionIndex.load(path)
        assert loaded.fingerprint == index.fingerprint
        assert loaded.ontology == index.ontology
        np.testing.assert_array_equal(loaded.vectors, index.vectors)


class TestScoreMention:
    def test_planted_self_match(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        sentence = docs[0].sentences[0]
        span = (docs[0].candidates[0][1], docs[0].candidates[0][2])
        mention = tiny_model.mention_vector(sentence, span).values
        planted_vectors = index.vectors.copy()
        planted_vectors[2] = mention
        planted = DefinitionIndex(index.ontology, planted_vectors, index.fingerprint)
        scores = dict(score_mention(tiny_model, planted, sentence, span))
        assert scores[ontology.names[2]] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_planted_vector(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        sentence = docs[0].sentences[0]
        span = (docs[0].candidates[0][1], docs[0].candidates[0][2])
        mention = tiny_model.mention_vector(sentence, span).values
        v = np.zeros_like(mention)
        v[0], v[1] = mention[1], -mention[0]
        planted_vectors = index.vectors.copy()
        planted_vectors[0] = v
        planted = DefinitionIndex(index.ontology, planted_vectors, index.fingerprint)
        scores = dict(score_mention(tiny_model, planted, sentence, span))
        assert scores[ontology.names[0]] == pytest.approx(0.0, abs=1e-12)

    def test_matches_per_type_cosine_oracle(self, tiny_model, tiny_world):
        from defex.encoder import cosine

        _, ontology, docs, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        sentence = docs[1].sentences[0]
        span = (docs[1].candidates[0][1], docs[1].candidates[0][2])
        scores = score_mention(tiny_model, index, sentence, span)
        mention = tiny_model.mention_vector(sentence, span).values
        for (name, got), (expected_name, definition) in zip(scores, ontology.types):
            assert name == expected_name
            want = cosine(mention, tiny_model.encode_definition(definition).values)
            assert got == pytest.approx(want, abs=1e-12)

    def test_stale_index_rejected(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        model = tiny_model.copy()
        index = build_definition_index(model, ontology)
        model.context_encoder.params["emb"][0, 0] += 1.0
        with pytest.raises(FingerprintError):
            score_mention(model, index, docs[0].sentences[0], (0, 0))

    def test_context_calls_counted_per_sentence(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        counter = CallCounter()
        score_mention(tiny_model, index, docs[0].sentences[0], (0, 0), counter=counter)
        assert counter.context_encoder_calls == 1
        assert counter.definition_encoder_calls == 0


class TestExtract:
    def test_high_threshold_empty(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        preds, _ = extract(tiny_model, index, docs, InferenceConfig(threshold=0.999))
        all_scores = []
        for doc in docs:
            for sent_idx, start, end in doc.candidates:
                best = max(s for _, s in score_mention(tiny_model, index, doc.sentences[sent_idx], (start, end)))
                all_scores.append(best)
        if max(all_scores) <= 0.999:
            assert len(preds) == 0

    def test_boundary_equality_excluded(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        doc = docs[0]
        sent_idx, start, end = doc.candidates[0]
        best = max(s for _, s in score_mention(tiny_model, index, doc.sentences[sent_idx], (start, end)))
        if not (-1.0 < best < 1.0):
            pytest.skip("degenerate best score")
        preds, _ = extract(tiny_model, index, (doc,), InferenceConfig(threshold=best))
        key = (doc.doc_id, sent_idx, start, end)
        assert key not in preds.keys()

    def test_counter_invariants(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        counter = CallCounter()
        index = build_definition_index(tiny_model, ontology, counter=counter)
        preds, counter = extract(tiny_model, index, docs, InferenceConfig(), counter=counter)
        assert counter.definition_encoder_calls == len(ontology)
        sentences_with_candidates = sum(
            len({c[0] for c in doc.candidates}) for doc in docs
        )
        assert counter.context_encoder_calls == sentences_with_candidates

    def test_argmax_tie_prefers_smallest_index(self, tiny_model, tiny_world):
        corpus, ontology, docs, _ = tiny_world
        # two types with identical definitions produce identical vectors
        name0, definition = ontology.types[0]
        doubled = EventOntology((("aaa_first", definition), ("zzz_clone", definition)) + ontology.types[1:])
        index = build_definition_index(tiny_model, doubled)
        np.testing.assert_array_equal(index.vectors[0], index.vectors[1])
        preds, _ = extract(tiny_model, index, docs, InferenceConfig(threshold=-0.999))
        assert len(preds) > 0
        assert all(r.type_name != "zzz_clone" for r in preds.records)

    def test_every_prediction_exceeds_threshold_and_is_max(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        config = InferenceConfig(threshold=0.1)
        preds, _ = extract(tiny_model, index, docs, config)
        docmap = {d.doc_id: d for d in docs}
        for record in preds.records:
            scores = score_mention(
                tiny_model, index,
                docmap[record.doc_id].sentences[record.sentence_idx],
                (record.start, record.end),
            )
            best_name, best_score = max(scores, key=lambda pair: pair[1])
            assert record.score > config.threshold
            assert record.score == pytest.approx(best_score, abs=1e-12)
            assert record.score == pytest.approx(dict(scores)[record.type_name], abs=1e-12)

    def test_deterministic(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        one, _ = extract(tiny_model, index, docs, InferenceConfig(threshold=0.2))
        two, _ = extract(tiny_model, index, docs, InferenceConfig(threshold=0.2))
        assert one == two

    def test_threshold_sweep_nested(self, tiny_model, tiny_world):
        _, ontology, docs, _ = tiny_world
        index = build_definition_index(tiny_model, ontology)
        thresholds = [0.1, 0.3, 0.5, 0.7, 0.9]
        sweep = threshold_sweep(tiny_model, index, docs, thresholds)
        for low, high in zip(thresholds, thresholds[1:]):
            assert sweep[high].typed_keys() <= sweep[low].typed_keys()


class TestJointSimulation:
    def test_degenerate_boundary(self):
        sim = simulate_joint_baseline(1.0, 1, 1)
        assert sim.joint_pair_count == 1
        assert sim.disjoint_call_count == 2
        assert sim.invocation_ratio == pytest.approx(0.5)

    def test_reference_scale(self):
        sim = simulate_joint_baseline(0.01, 1000, 168)
        assert sim.joint_pair_count == 168_000
        assert sim.disjoint_call_count == 1168
        assert sim.invocation_ratio == pytest.approx(168000 / 1168)
        assert sim.joint_seconds == pytest.approx(1680.0)

    def test_ratio_monotone_in_types(self):
        ratios = [simulate_joint_baseline(1.0, 10, t).invocation_ratio for t in range(1, 30)]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    def test_invalid(self):
        with pytest.raises(ArgumentError):
            simulate_joint_baseline(1.0, 0, 5)
        with pytest.raises(ArgumentError):
            simulate_joint_baseline(-0.1, 5, 5)

    def test_counter_report(self):
        counter = CallCounter(context_encoder_calls=120, definition_encoder_calls=7)
        report = counter_report(counter, n_candidates=150, n_types=7)
        assert report["joint_pair_count"] == 1050
        assert report["disjoint_call_count"] == 157
        assert report["context_encoder_calls"] == 120
        assert report["definition_encoder_calls"] == 7
