import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarcgen.corpus import (
    EOS_ID,
    PAD_ID,
    RESERVED,
    SOS_ID,
    CommentRecord,
    DataError,
    Hierarchy,
    Label,
    RecordValidationError,
    Topic,
    UserBehavior,
    Vocab,
    build_vocab,
    condition_of,
    decode_ids,
    encode_condition,
    encode_text,
    load_records,
    record_violations,
    save_records,
    split_dataset,
    validate_record,
)


def make_record(i=0, text="这是一条评论", label=Label.SARCASTIC, **kw):
    return CommentRecord(
        id=f"r{i}",
        text=text,
        label=label,
        topic=kw.pop("topic", Topic.LIFESTYLE),
        hierarchy=kw.pop("hierarchy", Hierarchy.TOP_LEVEL),
        **kw,
    )


VALID_RAW = {
    "id": "a1",
    "text": "今天天气真好",
    "label": 0,
    "topic": "lifestyle",
    "hierarchy": "top_level",
    "context": None,
    "behavior": {
        "comment_count": 120,
        "topic_distribution": [0.2, 0.2, 0.2, 0.2, 0.2],
        "sarcasm_rate": 0.4,
        "comment_frequency": 1.5,
        "reply_ratio": 0.3,
    },
}


class TestVocab:
    def test_min_freq_one_keeps_both_chars(self):
        vocab = build_vocab([make_record(text="aab")], min_freq=1)
        assert set(vocab.index_to_token) == set(RESERVED) | {"a", "b"}
        assert len(vocab) == 6

    def test_min_freq_two_drops_singleton(self):
        vocab = build_vocab([make_record(text="aab")], min_freq=2)
        assert "a" in vocab and "b" not in vocab
        assert vocab.id_of("b") == vocab.id_of("<never seen>")  # both UNK

    def test_vocab_size_matches_character_count_oracle(self):
        texts = ["甲乙丙丁", "丁戊己庚", "辛壬癸甲"]
        records = [make_record(i, t) for i, t in enumerate(texts)]
        distinct = set("".join(texts))
        assert len(distinct) == 10
        vocab = build_vocab(records, min_freq=1)
        assert len(vocab) == 10 + len(RESERVED) == 14

    def test_empty_corpus_rejected(self):
        with pytest.raises(DataError, match="empty corpus"):
            build_vocab([], min_freq=1)

    def test_reserved_indices_fixed(self):
        vocab = build_vocab([make_record(text="xy")], min_freq=1)
        assert vocab.index_to_token[:4] == RESERVED
        assert PAD_ID == 0

    def test_save_load_roundtrip(self, tmp_path):
        vocab = build_vocab([make_record(text="a\nb\tc")], min_freq=1)
        vocab.save(tmp_path / "vocab.txt")
        loaded = Vocab.load(tmp_path / "vocab.txt")
        assert loaded.index_to_token == vocab.index_to_token

    def test_file_format_one_token_per_line(self, tmp_path):
        vocab = build_vocab([make_record(text="ab")], min_freq=1)
        vocab.save(tmp_path / "vocab.txt")
        lines = (tmp_path / "vocab.txt").read_text(encoding="utf-8").splitlines()
        assert lines[:4] == list(RESERVED)
        assert lines[vocab.id_of("a")] == "a"


class TestEncodeText:
    @pytest.fixture
    def vocab(self):
        return build_vocab([make_record(text="ab")], min_freq=1)

    def test_empty_text(self, vocab):
        seq = encode_text("", vocab, t_max=4)
        assert list(seq.ids) == [SOS_ID, EOS_ID, PAD_ID, PAD_ID]
        assert seq.length == 2
        assert list(seq.mask) == [True, True, False, False]

    def test_direct_mapping(self, vocab):
        seq = encode_text("ab", vocab, t_max=8)
        a, b = vocab.id_of("a"), vocab.id_of("b")
        assert list(seq.ids) == [SOS_ID, a, b, EOS_ID] + [PAD_ID] * 4

    def test_unknown_chars_map_to_unk(self, vocab):
        seq = encode_text("aq", vocab, t_max=6)
        assert seq.ids[2] == vocab.id_of("q") == 3  # UNK

    def test_truncation_keeps_eos(self, vocab):
        seq = encode_text("ababab", vocab, t_max=4)
        assert seq.ids[0] == SOS_ID
        assert seq.ids[-1] == EOS_ID
        assert seq.length == 4

    def test_t_max_minimum(self, vocab):
        with pytest.raises(ValueError):
            encode_text("a", vocab, t_max=2)

    @settings(max_examples=1000, deadline=None)
    @given(st.text(alphabet="天气真好哈呵想吃饭了", min_size=0, max_size=30))
    def test_roundtrip(self, s):
        vocab = build_vocab([make_record(text="天气真好哈呵想吃饭了")], min_freq=1)
        t_max = 32
        assert len(s) <= t_max - 2
        assert decode_ids(encode_text(s, vocab, t_max).ids, vocab) == s


class TestCondition:
    def test_sarcastic_lifestyle_top(self):
        f = encode_condition(Label.SARCASTIC, Topic.LIFESTYLE, Hierarchy.TOP_LEVEL)
        assert list(f.values) == [1, 0, 1, 0, 0, 0, 0, 1, 0]

    def test_non_sarcastic_politics_nested(self):
        f = encode_condition(Label.NON_SARCASTIC, Topic.POLITICS, Hierarchy.NESTED)
        assert list(f.values) == [0, 1, 0, 1, 0, 0, 0, 0, 1]

    def test_all_combinations_have_three_ones(self):
        combos = [
            (label, topic, hierarchy)
            for label in (Label.SARCASTIC, Label.NON_SARCASTIC)
            for topic in Topic
            for hierarchy in Hierarchy
        ]
        assert len(combos) == 20
        for combo in combos:
            values = encode_condition(*combo).values
            assert sum(values) == 3
            assert sorted(values, reverse=True)[:3] == [1, 1, 1]

    def test_ambiguous_rejected(self):
        with pytest.raises(ValueError, match="condition requires binary label"):
            encode_condition(Label.AMBIGUOUS, Topic.LIFESTYLE, Hierarchy.NESTED)

    def test_condition_of_record(self):
        rec = make_record(label=Label.NON_SARCASTIC, topic=Topic.ENTERTAINMENT)
        assert condition_of(rec).values[2 + 2] == 1.0


class TestSplit:
    @staticmethod
    def records(n, sarcastic_frac=0.5):
        out = []
        for i in range(n):
            label = Label.SARCASTIC if i < n * sarcastic_frac else Label.NON_SARCASTIC
            out.append(make_record(i, label=label))
        return out

    def test_paper_ratio_sizes(self):
        train, val, test = split_dataset(self.records(20000), (0.6, 0.2, 0.2), seed=1)
        assert (len(train), len(val), len(test)) == (12000, 4000, 4000)

    def test_degenerate_all_train(self):
        train, val, test = split_dataset(self.records(10), (1.0, 0.0, 0.0), seed=1)
        assert len(train) == 10 and not val and not test

    def test_deterministic_and_seed_sensitive(self):
        recs = self.records(200)
        a = split_dataset(recs, (0.6, 0.2, 0.2), seed=7)
        b = split_dataset(recs, (0.6, 0.2, 0.2), seed=7)
        c = split_dataset(recs, (0.6, 0.2, 0.2), seed=8)
        assert [[r.id for r in part] for part in a] == [[r.id for r in part] for part in b]
        assert [r.id for r in a[0]] != [r.id for r in c[0]]

    def test_negative_ratio_rejected(self):
        with pytest.raises(ValueError):
            split_dataset(self.records(10), (1.2, -0.1, -0.1), seed=0)

    @settings(max_examples=50, deadline=None)
    @given(
        n=st.integers(min_value=1, max_value=300),
        frac=st.floats(min_value=0.0, max_value=1.0),
        seed=st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_partition_property(self, n, frac, seed):
        recs = self.records(n, sarcastic_frac=frac)
        train, val, test = split_dataset(recs, (0.6, 0.2, 0.2), seed=seed)
        ids = [r.id for r in train + val + test]
        assert sorted(ids) == sorted(r.id for r in recs)
        assert len(set(ids)) == n

    def test_stratification_within_one_record(self):
        recs = self.records(1000, sarcastic_frac=0.3)
        train, val, test = split_dataset(recs, (0.6, 0.2, 0.2), seed=3)
        for part, ratio in ((train, 0.6), (val, 0.2), (test, 0.2)):
            n_s = sum(1 for r in part if r.label is Label.SARCASTIC)
            assert abs(n_s - 300 * len(part) / 1000) <= 1


class TestValidate:
    def test_happy_path_attaches_behavior(self):
        rec = validate_record(dict(VALID_RAW))
        assert rec.behavior is not None
        assert rec.behavior.comment_count == 120

    def test_distribution_not_normalized(self):
        raw = json.loads(json.dumps(VALID_RAW))
        raw["behavior"]["topic_distribution"] = [0.5, 0.5, 0.5, 0, 0]
        with pytest.raises(RecordValidationError, match="distribution not normalized"):
            validate_record(raw)

    def test_ambiguous_label_rejected_in_training(self):
        raw = dict(VALID_RAW, label=2)
        with pytest.raises(RecordValidationError, match="ambiguous label in training data"):
            validate_record(raw)
        assert validate_record(raw, stage="annotation").label is Label.AMBIGUOUS

    def test_missing_required_field(self):
        raw = {k: v for k, v in VALID_RAW.items() if k not in ("text", "label")}
        violations = record_violations(raw)
        fields = {f for f, _ in violations}
        assert {"text", "label"} <= fields
        assert all(r == "missing required field" for f, r in violations if f in ("text", "label"))

    def test_whitespace_only_text_rejected(self):
        with pytest.raises(RecordValidationError, match="empty"):
            validate_record(dict(VALID_RAW, text="   "))

    def test_unknown_topic_rejected(self):
        with pytest.raises(RecordValidationError, match="unknown topic"):
            validate_record(dict(VALID_RAW, topic="sports"))

    def test_behavior_bounds(self):
        with pytest.raises(RecordValidationError, match="sarcasm_rate"):
            UserBehavior(1, (0.2, 0.2, 0.2, 0.2, 0.2), 1.5, 0.0, 0.0)


class TestRecordIO:
    def test_jsonl_roundtrip(self, tmp_path):
        rec = validate_record(dict(VALID_RAW))
        save_records([rec], tmp_path / "data.jsonl")
        loaded = load_records(tmp_path / "data.jsonl")
        assert loaded == [rec]

    def test_exact_field_names_on_disk(self, tmp_path):
        rec = validate_record(dict(VALID_RAW))
        save_records([rec], tmp_path / "data.jsonl")
        raw = json.loads((tmp_path / "data.jsonl").read_text(encoding="utf-8"))
        assert set(raw) == {"id", "text", "label", "topic", "hierarchy", "context", "behavior"}
        assert set(raw["behavior"]) == {
            "comment_count",
            "topic_distribution",
            "sarcasm_rate",
            "comment_frequency",
            "reply_ratio",
        }

    def test_load_reports_line_number(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"id": "x"}\n', encoding="utf-8")
        with pytest.raises(DataError, match="bad.jsonl:1"):
            load_records(p)
