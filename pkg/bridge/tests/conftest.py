"""Shared fixtures: a tiny local model and a deterministic evidence set.

The tests exercise real fine-tuning, so they need a real causal LM, but
no pretrained weights are assumed: a miniature randomly initialized
model with a byte-level tokenizer is built once per session and saved
in Hugging Face layout. Everything the scorer promises (grounding
lowers NLL on the evidence, reset restores initial behavior,
determinism under a fixed seed) holds for random weights just as for
pretrained ones.
"""

from __future__ import annotations

import os
import random

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    import torch
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers
    from transformers import (GPT2Config, GPT2LMHeadModel,
                              PreTrainedTokenizerFast)

    path = tmp_path_factory.mktemp("tiny-model")
    alphabet = sorted(pre_tokenizers.ByteLevel.alphabet())
    vocab = {ch: i for i, ch in enumerate(alphabet)}
    vocab["<|endoftext|>"] = len(vocab)
    tok = Tokenizer(models.BPE(vocab=vocab, merges=[]))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    tokenizer = PreTrainedTokenizerFast(tokenizer_object=tok,
                                        bos_token="<|endoftext|>",
                                        eos_token="<|endoftext|>")
    tokenizer.save_pretrained(path)

    torch.manual_seed(0)
    config = GPT2Config(vocab_size=len(tokenizer), n_positions=128,
                        n_embd=32, n_layer=2, n_head=2,
                        bos_token_id=tokenizer.bos_token_id,
                        eos_token_id=tokenizer.eos_token_id)
    GPT2LMHeadModel(config).save_pretrained(path)
    return str(path)


def make_evidence(n: int, seed: int = 7) -> list[str]:
    rng = random.Random(seed)
    subjects = ["the harbor office", "the night ferry", "the tide gauge",
                "the cargo manifest", "the river pilot", "the dock crane"]
    verbs = ["records", "tracks", "schedules", "inspects", "signals"]
    objects = ["arriving ships", "the morning tide", "every berth",
               "the grain barges", "the channel buoys"]
    return [
        f"{rng.choice(subjects)} {rng.choice(verbs)} {rng.choice(objects)}."
        for _ in range(n)
    ]
