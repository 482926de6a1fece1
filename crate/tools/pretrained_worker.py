#!/usr/bin/env python3
"""Worker process for the `pretrained-adapter` backend.

Reads one JSON request per line on stdin and answers with one JSON line on
stdout. Hosts a Hugging Face sequence classifier with six output labels.

    python3 tools/pretrained_worker.py --model Davlan/afro-xlmr-base
    python3 tools/pretrained_worker.py --tiny-random    # offline, for tests
"""

import argparse
import hashlib
import json
import math
import random
import sys

PROTOCOL = 1
NUM_LABELS = 6


class HashTokenizer:
    """Whitespace tokenizer with hashed ids, used with --tiny-random."""

    pad_token_id = 0
    cls_token_id = 1
    sep_token_id = 2

    def __init__(self, vocab_size):
        self.vocab_size = vocab_size

    def word_id(self, word):
        digest = hashlib.sha256(word.encode("utf-8")).digest()
        return 3 + int.from_bytes(digest[:8], "little") % (self.vocab_size - 3)

    def encode(self, text):
        return [self.cls_token_id] + [self.word_id(w) for w in text.split()] + [self.sep_token_id]

    def fingerprint(self):
        return f"hash-sha256:vocab={self.vocab_size}"


class Worker:
    def __init__(self, args):
        import torch

        self.torch = torch
        torch.manual_seed(args.seed)
        random.seed(args.seed)
        torch.use_deterministic_algorithms(True, warn_only=True)
        self.device = torch.device("cuda" if torch.cuda.is_available() else "cpu")
        self.reduced = False
        self.optimizer = None
        self.optimizer_key = None

        if args.tiny_random:
            from transformers import BertConfig, BertForSequenceClassification

            config = BertConfig(
                vocab_size=512,
                hidden_size=32,
                num_hidden_layers=1,
                num_attention_heads=2,
                intermediate_size=64,
                max_position_embeddings=512,
                num_labels=NUM_LABELS,
                pad_token_id=0,
            )
            self.model = BertForSequenceClassification(config)
            self.hash_tokenizer = HashTokenizer(config.vocab_size)
            self.hf_tokenizer = None
            name = "tiny-random-bert"
            tok_fp = self.hash_tokenizer.fingerprint()
            self.pad_id = HashTokenizer.pad_token_id
        else:
            if not args.model:
                raise SystemExit("--model is required unless --tiny-random is given")
            from transformers import AutoModelForSequenceClassification, AutoTokenizer

            self.hf_tokenizer = AutoTokenizer.from_pretrained(args.model)
            self.hash_tokenizer = None
            self.model = AutoModelForSequenceClassification.from_pretrained(args.model, num_labels=NUM_LABELS)
            name = args.model
            tok_fp = f"hf-tokenizer:{args.model}:vocab={len(self.hf_tokenizer)}"
            self.pad_id = self.hf_tokenizer.pad_token_id

        self.model.to(self.device)
        params = sum(p.numel() for p in self.model.parameters())
        self.fingerprint = f"hf:{name}:{self.model.config.model_type}:params={params}"
        self.tokenizer_fingerprint = tok_fp

    def tensors(self, req):
        torch = self.torch
        ids = torch.tensor(req["ids"], dtype=torch.long, device=self.device)
        mask = torch.tensor(req["mask"], dtype=torch.long, device=self.device)
        return ids, mask

    def autocast(self):
        dtype = self.torch.float16 if self.device.type == "cuda" else self.torch.bfloat16
        return self.torch.autocast(device_type=self.device.type, dtype=dtype, enabled=self.reduced)

    def op_probe(self, req):
        return {
            "protocol": PROTOCOL,
            "num_labels": self.model.config.num_labels,
            "pad_id": self.pad_id,
            "fingerprint": self.fingerprint,
            "tokenizer_fingerprint": self.tokenizer_fingerprint,
        }

    def op_tokenize(self, req):
        if self.hash_tokenizer is not None:
            return {"ids": self.hash_tokenizer.encode(req["text"])}
        ids = self.hf_tokenizer(req["text"], add_special_tokens=True, truncation=False)["input_ids"]
        return {"ids": ids}

    def op_forward(self, req):
        ids, mask = self.tensors(req)
        self.model.eval()
        with self.torch.no_grad(), self.autocast():
            logits = self.model(input_ids=ids, attention_mask=mask).logits
        return {"logits": logits.float().cpu().tolist()}

    def op_backward(self, req):
        torch = self.torch
        ids, mask = self.tensors(req)
        labels = torch.tensor(req["labels"], dtype=torch.long, device=self.device)
        self.model.train()
        self.model.zero_grad(set_to_none=True)
        with self.autocast():
            logits = self.model(input_ids=ids, attention_mask=mask).logits
        loss = torch.nn.functional.cross_entropy(logits.float(), labels)
        loss.backward()
        value = loss.item()
        return {"loss": value if math.isfinite(value) else None}

    def op_apply_update(self, req):
        torch = self.torch
        key = (req["beta1"], req["beta2"], req["eps"], req["weight_decay"])
        if self.optimizer is None or self.optimizer_key != key:
            self.optimizer = torch.optim.AdamW(
                self.model.parameters(),
                lr=req["lr"],
                betas=(req["beta1"], req["beta2"]),
                eps=req["eps"],
                weight_decay=req["weight_decay"],
            )
            self.optimizer_key = key
        for group in self.optimizer.param_groups:
            group["lr"] = req["lr"]
        torch.nn.utils.clip_grad_norm_(self.model.parameters(), req["max_grad_norm"])
        self.optimizer.step()
        return {}

    def op_save(self, req):
        self.torch.save(self.model.state_dict(), req["path"])
        return {}

    def op_load(self, req):
        state = self.torch.load(req["path"], map_location=self.device)
        self.model.load_state_dict(state)
        self.optimizer = None
        return {}

    def op_set_precision(self, req):
        self.reduced = bool(req["reduced"])
        return {}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", help="model directory or hub id")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--tiny-random", action="store_true", help="small random model, no downloads")
    args = parser.parse_args()

    # Anything printed by libraries must not corrupt the protocol stream.
    protocol_out = sys.stdout
    sys.stdout = sys.stderr

    def reply(obj):
        protocol_out.write(json.dumps(obj, allow_nan=False) + "\n")
        protocol_out.flush()

    try:
        worker = Worker(args)
    except BaseException as exc:  # report startup failures through the probe
        for line in sys.stdin:
            reply({"ok": False, "error": f"worker failed to start: {exc}"})
            break
        return 1

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            op = req.get("op")
            if op == "shutdown":
                break
            handler = getattr(worker, f"op_{op}", None)
            if handler is None:
                raise ValueError(f"unknown op {op!r}")
            result = handler(req)
            result["ok"] = True
            reply(result)
        except Exception as exc:
            reply({"ok": False, "error": f"{type(exc).__name__}: {exc}"})
    return 0


if __name__ == "__main__":
    sys.exit(main())
