"""Causal-LM scorer: ground on evidence by fine-tuning, score by perplexity.

Perplexity is exp(mean next-token NLL) over the model's own subword
units. Texts are encoded one at a time (no cross-text packing), each
truncated to max_length tokens including the prepended BOS context
token, which is conditioned on but never predicted.
"""

from __future__ import annotations

import math

import torch
from transformers import AutoModelForCausalLM, AutoTokenizer

__all__ = ["CausalLmScorer", "ScorerError"]


class ScorerError(ValueError):
    """A request the scorer must refuse (bad input, not grounded)."""


class CausalLmScorer:
    """Wraps a pretrained causal LM behind ground/score/reset.

    ground fine-tunes every parameter on the evidence texts; reset
    restores the weights captured at load time, so a reset scorer
    behaves exactly like a freshly loaded one. One request at a time;
    instances are not thread-safe.
    """

    def __init__(self, model_path: str, device: str = "cpu", seed: int = 0,
                 max_length: int = 256):
        if max_length < 2:
            raise ValueError("max_length must leave room for BOS plus one token")
        self.tokenizer = AutoTokenizer.from_pretrained(model_path)
        self.model = AutoModelForCausalLM.from_pretrained(model_path)
        self.device = torch.device(device)
        self.model.to(self.device)
        self.model.eval()
        self.seed = seed
        self.max_length = max_length
        self.grounded = False
        bos = self.tokenizer.bos_token_id
        if bos is None:
            bos = self.tokenizer.eos_token_id
        if bos is None:
            raise ScorerError("tokenizer defines neither BOS nor EOS; "
                              "cannot build scoring context")
        self._bos_id = int(bos)
        # Weights as loaded, kept on CPU so reset restores them exactly.
        self._initial_state = {
            key: value.detach().cpu().clone()
            for key, value in self.model.state_dict().items()
        }

    def _encode(self, text) -> list[int]:
        if not isinstance(text, str) or not text.strip():
            raise ScorerError("text must be a non-empty string")
        ids = self.tokenizer(text, add_special_tokens=False)["input_ids"]
        ids = ids[: self.max_length - 1]
        if not ids:
            raise ScorerError("text produced no tokens")
        return [self._bos_id] + ids

    def ground(self, evidence, epochs: int = 5,
               learning_rate: float = 5e-5) -> dict:
        """Fine-tune on the evidence texts; returns acknowledgment fields."""
        if not isinstance(evidence, list) or not evidence:
            raise ScorerError("evidence must be a non-empty list of strings")
        if not isinstance(epochs, int) or isinstance(epochs, bool) or epochs < 1:
            raise ScorerError("epochs must be a positive integer")
        if not isinstance(learning_rate, (int, float)) \
                or isinstance(learning_rate, bool) or not learning_rate > 0:
            raise ScorerError("learning_rate must be positive")
        batches = [self._tensor(self._encode(text)) for text in evidence]
        torch.manual_seed(self.seed)
        self.model.train()
        optimizer = torch.optim.AdamW(self.model.parameters(), lr=learning_rate)
        try:
            for _ in range(epochs):
                for input_ids in batches:
                    loss = self.model(input_ids=input_ids, labels=input_ids).loss
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
        finally:
            self.model.eval()
        self.grounded = True
        return {
            "unit": "subword",
            "n_texts": len(evidence),
            "epochs": epochs,
            "learning_rate": learning_rate,
            "max_length": self.max_length,
            "packing": "per-text",
        }

    def score(self, text) -> float:
        if not self.grounded:
            raise ScorerError("not grounded")
        return math.exp(self.nll(text))

    def nll(self, text) -> float:
        """Mean per-token NLL under the current weights (no grounding gate)."""
        input_ids = self._tensor(self._encode(text))
        with torch.no_grad():
            loss = self.model(input_ids=input_ids, labels=input_ids).loss
        return float(loss)

    def reset(self) -> None:
        self.model.load_state_dict(self._initial_state)
        self.model.to(self.device)
        self.model.eval()
        self.grounded = False

    def _tensor(self, ids: list[int]) -> torch.Tensor:
        return torch.tensor([ids], dtype=torch.long, device=self.device)
