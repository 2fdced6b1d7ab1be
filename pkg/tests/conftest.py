import json

import pytest

from weaklabel import kernels
from weaklabel.corpus import load_corpus, load_labels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT-compile the numba kernels once so timed tests measure work, not
    # compilation
    kernels.warmup()


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return str(path)


@pytest.fixture
def corpus_file(tmp_path):
    def make(records, name="corpus.jsonl"):
        return write_jsonl(tmp_path / name, records)
    return make


@pytest.fixture
def label_file(tmp_path):
    def make(records, name="labels.jsonl"):
        return write_jsonl(tmp_path / name, records)
    return make


def paper_record(pid, title="", abstract="", sections=None, bib_refs=(), labels=None):
    rec = {"id": pid, "title": title, "abstract": abstract,
           "sections": sections or [], "bib_refs": list(bib_refs)}
    if labels is not None:
        rec["labels"] = list(labels)
    return rec


def load_corpus_records(tmp_path, records, min_words=10):
    path = write_jsonl(tmp_path / "corpus.jsonl", records)
    return load_corpus(path, min_words)


def load_label_records(tmp_path, records):
    path = write_jsonl(tmp_path / "labels.jsonl", records)
    return load_labels(path)
