#!/usr/bin/env python3
"""External trainer for full-size backbones.

Called by the experiment runner for backbones that are not trained in
process. Reads the augmented splits the runner writes into --data-dir and
writes dev_predictions.jsonl and predictions.jsonl into --out, one
{"instance_id", "pred_label", "scores"} object per line.

Needs torch and transformers, a GPU for reasonable run times, and access to
the pretrained weights named by --model.
"""

import argparse
import json
import os
import random

import numpy as np
import torch
from torch import nn
from transformers import AutoModelForSequenceClassification, AutoTokenizer


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def tag_tokens(examples):
    tags = set()
    for ex in examples:
        for seg in ex["segments"]:
            tags.update(t for t in seg if len(t) > 2 and t[0] == "[" and t[-1] == "]")
    return sorted(tags)


def add_tag_tokens(tokenizer, model, tags):
    new = [t for t in tags if t not in tokenizer.get_vocab()]
    if not new:
        return
    tokenizer.add_special_tokens({"additional_special_tokens": new})
    old = model.get_input_embeddings().weight.shape[0]
    model.resize_token_embeddings(len(tokenizer))
    with torch.no_grad():
        emb = model.get_input_embeddings().weight
        emb[old:] = emb[:old].mean(dim=0, keepdim=True)


def encode(tokenizer, ex, max_length):
    # Segments are joined with the tokenizer's own separator; the first two
    # also get distinct token type ids where the model supports them.
    texts = [" ".join(seg) for seg in ex["segments"]]
    first = texts[0]
    rest = f" {tokenizer.sep_token} ".join(texts[1:]) if len(texts) > 1 else None
    return tokenizer(first, rest, truncation="longest_first", max_length=max_length)


def batches(items, size, rng=None):
    order = list(range(len(items)))
    if rng is not None:
        rng.shuffle(order)
    for i in range(0, len(order), size):
        yield [items[j] for j in order[i:i + size]]


def collate(tokenizer, encs, device):
    feats = [{k: v for k, v in e.items() if k != "label"} for e in encs]
    batch = tokenizer.pad(feats, return_tensors="pt")
    batch = {k: v.to(device) for k, v in batch.items()}
    labels = torch.tensor([e["label"] for e in encs], device=device)
    return batch, labels


def evaluate(model, tokenizer, encs, batch_size, device):
    model.eval()
    probs = []
    with torch.no_grad():
        for chunk in batches(encs, batch_size):
            batch, _ = collate(tokenizer, chunk, device)
            logits = model(**batch).logits
            probs.extend(torch.softmax(logits, dim=-1).cpu().tolist())
    return probs


def micro_macro(gold, pred, num_labels):
    f1s = []
    for c in range(num_labels):
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    micro = sum(1 for g, p in zip(gold, pred) if g == p) / max(len(gold), 1)
    return micro, sum(f1s) / num_labels


def write_predictions(path, examples, probs, labels):
    with open(path, "w", encoding="utf-8") as f:
        for ex, p in zip(examples, probs):
            best = max(range(len(p)), key=lambda i: (p[i], -i))
            f.write(json.dumps({"instance_id": ex["instance_id"], "pred_label": labels[best], "scores": p}) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", required=True, help="pretrained model name or path")
    ap.add_argument("--data-dir", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    cfg = read_json(os.path.join(args.data_dir, "train_config.json"))
    spec = read_json(os.path.join(args.data_dir, "encoder_spec.json"))
    labels = read_json(os.path.join(args.data_dir, "labels.json"))["labels"]
    train = read_jsonl(os.path.join(args.data_dir, "train.jsonl"))
    dev = read_jsonl(os.path.join(args.data_dir, "dev.jsonl"))
    test = read_jsonl(os.path.join(args.data_dir, "test.jsonl"))

    seed = int(cfg["seed"])
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    device = "cuda" if torch.cuda.is_available() else "cpu"

    tokenizer = AutoTokenizer.from_pretrained(args.model)
    model = AutoModelForSequenceClassification.from_pretrained(
        args.model,
        num_labels=len(labels),
        hidden_dropout_prob=cfg["dropout"],
        attention_probs_dropout_prob=cfg["dropout"],
    )
    if spec.get("add_tag_tokens", True):
        add_tag_tokens(tokenizer, model, tag_tokens(train + dev + test))
    model.to(device)

    def prepare(examples):
        out = []
        for ex in examples:
            enc = dict(encode(tokenizer, ex, spec["max_length"]))
            enc["label"] = ex["label_index"]
            out.append(enc)
        return out

    train_enc, dev_enc, test_enc = prepare(train), prepare(dev), prepare(test)
    no_decay = ("bias", "LayerNorm.weight", "layer_norm.weight")
    groups = [
        {"params": [p for n, p in model.named_parameters() if not any(k in n for k in no_decay)],
         "weight_decay": cfg["weight_decay"]},
        {"params": [p for n, p in model.named_parameters() if any(k in n for k in no_decay)],
         "weight_decay": 0.0},
    ]
    opt = torch.optim.AdamW(groups, lr=cfg["learning_rate"])
    loss_fn = nn.CrossEntropyLoss()
    rng = random.Random(seed)
    metric = 0 if cfg["selection_metric"] == "micro_f1" else 1
    dev_gold = [ex["label_index"] for ex in dev]

    best, best_state, stale = -1.0, None, 0
    for epoch in range(1, cfg["max_epochs"] + 1):
        model.train()
        for chunk in batches(train_enc, cfg["batch_size"], rng):
            batch, y = collate(tokenizer, chunk, device)
            loss = loss_fn(model(**batch).logits, y)
            if not torch.isfinite(loss):
                raise SystemExit("training diverged: non-finite loss")
            opt.zero_grad()
            loss.backward()
            opt.step()
        probs = evaluate(model, tokenizer, dev_enc, cfg["batch_size"], device)
        pred = [max(range(len(p)), key=lambda i: (p[i], -i)) for p in probs]
        value = micro_macro(dev_gold, pred, len(labels))[metric]
        print(f"epoch {epoch}: dev {cfg['selection_metric']} {value:.4f}", flush=True)
        if value > best:
            best, stale = value, 0
            best_state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
        else:
            stale += 1
            if stale >= cfg["early_stop_patience"]:
                break

    model.load_state_dict(best_state)
    os.makedirs(args.out, exist_ok=True)
    write_predictions(os.path.join(args.out, "dev_predictions.jsonl"), dev,
                      evaluate(model, tokenizer, dev_enc, cfg["batch_size"], device), labels)
    write_predictions(os.path.join(args.out, "predictions.jsonl"), test,
                      evaluate(model, tokenizer, test_enc, cfg["batch_size"], device), labels)


if __name__ == "__main__":
    main()
