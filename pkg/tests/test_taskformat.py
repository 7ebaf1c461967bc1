"""Tests for the joint vocabulary, serialization, and patching."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import payloads_equal, random_payloads
from uniseq.taskformat import (
    SPECIAL,
    SPECIAL_SIZE,
    TASK_NAMES,
    KIND_AUDIO,
    KIND_CONTINUOUS,
    KIND_DISCRETE,
    TaskSequence,
    build_vocab,
    default_templates,
    default_vocab,
    dump_tokens,
    load_templates,
    parse_task,
    resample_weights,
    save_templates,
    serialize_prefix,
    serialize_task,
    to_patches,
)


def small_vocab(n_q=3, v=16):
    return build_vocab([("special", SPECIAL_SIZE), ("audio", n_q * v),
                        ("semantic", 8), ("phoneme", 8), ("midi", 8)])


class TestVocabulary:
    def test_default_total(self):
        assert default_vocab().total == 4212

    def test_default_total_decomposition(self):
        assert SPECIAL_SIZE + 3 * 1024 + 500 + 256 + 256 == 4212

    def test_offset_arithmetic(self):
        vocab = build_vocab([("special", SPECIAL_SIZE), ("audio", 2 * 16)])
        assert vocab.total == 160
        assert vocab.audio_id(1, 5, 2) == 128 + 16 + 5

    def test_roundtrip_all_ids(self):
        vocab = small_vocab()
        for gid in range(vocab.total):
            name, local = vocab.to_local(gid)
            assert vocab.global_id(name, local) == gid

    def test_audio_id_level_major(self):
        vocab = small_vocab(n_q=3, v=16)
        assert vocab.audio_id(0, 0, 3) == SPECIAL_SIZE
        assert vocab.audio_id(2, 15, 3) == SPECIAL_SIZE + 3 * 16 - 1
        assert vocab.audio_code(vocab.audio_id(1, 7, 3), 3) == (1, 7)

    def test_special_range_must_come_first(self):
        with pytest.raises(ValueError):
            build_vocab([("audio", 10)])

    def test_duplicate_and_empty_ranges(self):
        with pytest.raises(ValueError, match="duplicate"):
            build_vocab([("special", SPECIAL_SIZE), ("a", 4), ("a", 4)])
        with pytest.raises(ValueError, match="zero-size"):
            build_vocab([("special", SPECIAL_SIZE), ("a", 0)])

    def test_out_of_range_ids(self):
        vocab = small_vocab()
        with pytest.raises(ValueError):
            vocab.global_id("phoneme", 8)
        with pytest.raises(ValueError):
            vocab.to_local(vocab.total)


class TestSpecialTokens:
    def test_eleven_tasks(self):
        assert len(TASK_NAMES) == 11
        assert len(default_templates()) == 11

    def test_all_special_ids_fit_in_reserved_block(self):
        assert max(SPECIAL.values()) < SPECIAL_SIZE
        assert len(set(SPECIAL.values())) == len(SPECIAL)

    def test_control_tokens_lead(self):
        assert SPECIAL["<start>"] == 0
        assert SPECIAL["<end>"] == 1


class TestSerializeParse:
    @pytest.mark.parametrize("task", TASK_NAMES)
    def test_roundtrip_each_template(self, task):
        vocab = small_vocab()
        templates = default_templates()
        rng = np.random.default_rng(hash(task) % 2**32)
        for _ in range(20):
            payloads = random_payloads(vocab, templates[task], 3, rng)
            target = rng.integers(0, 16, size=(int(rng.integers(1, 6)), 3))
            seq = serialize_task(vocab, templates[task], payloads, target, 3)
            name, back, tgt = parse_task(vocab, templates, seq)
            assert name == task
            assert payloads_equal(back, payloads)
            assert np.array_equal(tgt, target)

    def test_stream_shape(self):
        vocab = small_vocab()
        tpl = default_templates()["se"]
        seq = serialize_task(vocab, tpl, {"acond": np.zeros((2, 3), dtype=int)},
                             np.zeros((2, 3), dtype=int), 3)
        toks = seq.tokens
        assert toks[0] == SPECIAL["<start>"]
        assert toks[1] == SPECIAL["<se_task>"]
        assert toks[2] == SPECIAL["<acond_start>"]
        assert toks[-1] == SPECIAL["<end>"]
        assert toks[-2] == SPECIAL["<audio_end>"]

    def test_missing_end_error(self):
        vocab = small_vocab()
        templates = default_templates()
        seq = serialize_task(vocab, templates["se"],
                             {"acond": np.zeros((1, 3), dtype=int)},
                             np.zeros((1, 3), dtype=int), 3)
        broken = TaskSequence(seq.tokens[:-1], seq.spans, seq.continuous, 3)
        with pytest.raises(ValueError, match="unterminated"):
            parse_task(vocab, templates, broken)

    def test_audio_span_not_divisible_error(self):
        vocab = small_vocab()
        templates = default_templates()
        seq = serialize_task(vocab, templates["se"],
                             {"acond": np.zeros((1, 3), dtype=int)},
                             np.zeros((3, 3), dtype=int), 3)
        # drop two target tokens: 7 audio tokens with n_q=3
        toks = np.concatenate([seq.tokens[:-4], seq.tokens[-2:]])
        broken = TaskSequence(toks, seq.spans, seq.continuous, 3)
        with pytest.raises(ValueError, match="not divisible"):
            parse_task(vocab, templates, broken)

    def test_empty_target_rejected(self):
        vocab = small_vocab()
        tpl = default_templates()["se"]
        with pytest.raises(ValueError, match="empty target"):
            serialize_task(vocab, tpl, {"acond": np.zeros((1, 3), dtype=int)},
                           np.zeros((0, 3), dtype=int), 3)

    def test_wrong_payload_set_rejected(self):
        vocab = small_vocab()
        tpl = default_templates()["tts"]
        with pytest.raises(ValueError, match="payloads"):
            serialize_task(vocab, tpl, {"phoneme": [1]},
                           np.zeros((1, 3), dtype=int), 3)

    def test_prefix_ends_at_audio_start(self):
        vocab = small_vocab()
        tpl = default_templates()["tts"]
        prefix = serialize_prefix(vocab, tpl, {
            "phoneme": [1, 2], "prompt": np.zeros((1, 3), dtype=int)}, 3)
        assert prefix.tokens[-1] == SPECIAL["<audio_start>"]

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(TASK_NAMES), st.integers(0, 10**6))
    def test_roundtrip_property(self, task, seed):
        vocab = small_vocab()
        templates = default_templates()
        rng = np.random.default_rng(seed)
        payloads = random_payloads(vocab, templates[task], 3, rng)
        target = rng.integers(0, 16, size=(2, 3))
        seq = serialize_task(vocab, templates[task], payloads, target, 3)
        name, back, tgt = parse_task(vocab, templates, seq)
        assert name == task and payloads_equal(back, payloads)
        assert np.array_equal(tgt, target)


class TestTemplateRegistry:
    def test_save_load_roundtrip(self, tmp_path):
        path = tmp_path / "templates.json"
        templates = default_templates()
        save_templates(path, templates)
        assert load_templates(path) == templates

    def test_unknown_task_rejected(self, tmp_path):
        path = tmp_path / "templates.json"
        path.write_text('{"tasks": {"bogus": []}}')
        with pytest.raises(ValueError, match="unknown task"):
            load_templates(path)


class TestToPatches:
    def test_sound_task_patch_count(self):
        # <start> <sound_task> <text_start> c c <text_end>
        # <audio_start> f f <audio_end> <end>  -> 11 patches
        vocab = small_vocab()
        tpl = default_templates()["sound"]
        seq = serialize_task(vocab, tpl, {"text": np.zeros((2, 4))},
                             np.zeros((2, 3), dtype=int), 3)
        patches = to_patches(seq, 3, cont_dim=4)
        assert patches.K == 11
        assert patches.kinds.tolist() == [
            KIND_DISCRETE, KIND_DISCRETE, KIND_DISCRETE,
            KIND_CONTINUOUS, KIND_CONTINUOUS, KIND_DISCRETE,
            KIND_DISCRETE, KIND_AUDIO, KIND_AUDIO,
            KIND_DISCRETE, KIND_DISCRETE]
        assert patches.target_start == 7
        assert patches.target_end == 9

    def test_discrete_patch_repeats_token(self):
        vocab = small_vocab()
        tpl = default_templates()["tts"]
        seq = serialize_task(vocab, tpl, {
            "phoneme": [5], "prompt": np.zeros((1, 3), dtype=int)},
            np.zeros((1, 3), dtype=int), 3)
        patches = to_patches(seq, 3)
        gid = vocab.global_id("phoneme", 5)
        row = patches.targets[patches.kinds == KIND_DISCRETE]
        assert any(np.all(r == gid) for r in row)

    def test_continuous_targets_are_placeholder(self):
        vocab = small_vocab()
        tpl = default_templates()["music"]
        seq = serialize_task(vocab, tpl, {"text": np.ones((3, 4))},
                             np.zeros((1, 3), dtype=int), 3)
        patches = to_patches(seq, 3, cont_dim=4)
        cont = patches.targets[patches.kinds == KIND_CONTINUOUS]
        assert np.all(cont == SPECIAL["<continuous_token>"])
        assert np.allclose(patches.cont[patches.kinds == KIND_CONTINUOUS], 1.0)

    def test_pure_audio_one_patch_per_frame(self):
        vocab = small_vocab()
        tpl = default_templates()["se"]
        t = 7
        seq = serialize_task(vocab, tpl, {"acond": np.zeros((1, 3), dtype=int)},
                             np.zeros((t, 3), dtype=int), 3)
        patches = to_patches(seq, 3)
        assert (patches.kinds == KIND_AUDIO).sum() == t + 1
        assert patches.target_end - patches.target_start == t

    def test_max_context_overflow(self):
        vocab = small_vocab()
        tpl = default_templates()["se"]
        seq = serialize_task(vocab, tpl, {"acond": np.zeros((1, 3), dtype=int)},
                             np.zeros((3000, 3), dtype=int), 3)
        with pytest.raises(ValueError, match="max context"):
            to_patches(seq, 3, max_patches=3000)  # 3007 with markers


class TestResampleWeights:
    def test_alpha_zero_uniform(self):
        assert np.allclose(resample_weights([1, 100, 10000], 0.0), 1 / 3)

    def test_alpha_one_proportional(self):
        w = resample_weights([100, 300], 1.0)
        assert np.allclose(w, [0.25, 0.75])

    def test_reference_value(self):
        w = resample_weights([100, 10000], 0.05)
        assert np.allclose(w, [0.4427, 0.5573], atol=1e-4)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            resample_weights([0, 5], 0.5)
        with pytest.raises(ValueError):
            resample_weights([1, 2], -0.1)


class TestDumpTokens:
    def test_names_and_locals(self):
        vocab = small_vocab()
        tpl = default_templates()["se"]
        seq = serialize_task(vocab, tpl, {"acond": np.array([[1, 2, 3]])},
                             np.array([[4, 5, 6]]), 3)
        lines = dump_tokens(vocab, seq).splitlines()
        assert lines[0] == "<start>"
        assert lines[1] == "<se_task>"
        assert "audio:1" in lines
        assert lines[-1] == "<end>"
