#!/usr/bin/env python3
"""Fill an activation store from a Hugging Face causal LM.

Reads a dataset from the canonical store, assembles the same digit-space
prompt the harness uses, runs one forward pass per sample, and writes the
final-token hidden state of every layer into the activation-store layout the
C++ probe pipeline consumes (acts/<key-hash>/meta.json + <sample_id>.f32).

Requires: pip install tsprobe[extract]  (torch + transformers)

Example:
  python tools/extract_hf.py --model google/gemma-2-9b-it --model-name gemma \
      --data-root data --dataset emg --out out/acts
"""

import argparse
import csv
import json
import struct
import sys
from pathlib import Path

import tsprobe


def load_split(data_root: Path, dataset_id: str, split: str):
    ds_dir = data_root / dataset_id
    manifest = json.loads((ds_dir / "manifest.json").read_text())
    shape = manifest["shapes"][split]
    n, v, t = shape["n"], shape["v"], shape["t"]
    raw = (ds_dir / f"{split}.f32").read_bytes()
    values = struct.unpack(f"<{n * v * t}f", raw)
    ids, labels = [], []
    with open(ds_dir / f"{split}.labels.csv") as f:
        for row in csv.DictReader(f):
            ids.append(row["sample_id"])
            labels.append(int(row["label"]))
    return manifest, (n, v, t), values, ids, labels


def build_prompt(manifest, sample, v, t, template_text, question):
    channel_names = manifest["channel_names"]
    if v == 1:
        payload = tsprobe.serialize_digits(list(sample[:t]))
    else:
        lines = []
        for ch in range(v):
            digits = tsprobe.serialize_digits(list(sample[ch * t:(ch + 1) * t]))
            lines.append(f"{channel_names[ch]}: {digits}")
        payload = "\n".join(lines)

    letters = [chr(ord("A") + i) for i in range(len(manifest["class_names"]))]
    options = "\n".join(f"[{l}] {name}" for l, name in zip(letters, manifest["class_names"]))
    system_text = (
        f"{template_text}\n\n"
        "You will be given a multiple choice question and a time series. Your job is to use "
        "the time series to answer the question. Do not explain your reasoning.\n"
        f"Use exactly this format: {tsprobe.format_requirement}\n"
        "Example: The answer is [D] CABBAGE\n"
    )
    user_text = (
        f"Dataset: {manifest['id']}\n\n"
        f"Question: {question}\n\n"
        f"Options:\n{options}\n\n"
        f"Time series:\n{payload}\n"
        f"\nOutput format requirement: {tsprobe.format_requirement}\n"
    )
    return system_text, user_text


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", required=True, help="HF model id or local path")
    ap.add_argument("--model-name", required=True,
                    help="adapter name used in the harness config (store key field)")
    ap.add_argument("--data-root", default="data", type=Path)
    ap.add_argument("--dataset", required=True)
    ap.add_argument("--out", default="out/acts", type=Path, help="activation store root")
    ap.add_argument("--template", type=Path, default=None,
                    help="template.toml (default prompts/<dataset>/template.toml)")
    ap.add_argument("--splits", nargs="+", default=["train", "test"])
    ap.add_argument("--device", default="auto")
    ap.add_argument("--dtype", default="bfloat16")
    ap.add_argument("--max-samples", type=int, default=0, help="cap per split (0 = all)")
    args = ap.parse_args()

    import torch
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tok = AutoTokenizer.from_pretrained(args.model)
    model = AutoModelForCausalLM.from_pretrained(
        args.model,
        torch_dtype=getattr(torch, args.dtype),
        device_map=args.device,
        output_hidden_states=True,
    )
    model.eval()

    tmpl_path = args.template or Path("prompts") / args.dataset / "template.toml"
    task_description, question = "", ""
    for line in tmpl_path.read_text().splitlines():
        if line.startswith("task_description"):
            task_description = line.split("=", 1)[1].strip().strip('"')
        if line.startswith("question"):
            question = line.split("=", 1)[1].strip().strip('"')

    for split in args.splits:
        manifest, (n, v, t), values, ids, _labels = load_split(args.data_root, args.dataset,
                                                               split)
        if args.max_samples:
            n = min(n, args.max_samples)
        num_layers = model.config.num_hidden_layers
        dim = model.config.hidden_size
        store = tsprobe.ActivationStore.create_or_open(
            str(args.out), model=args.model_name, dataset=args.dataset, split=split,
            modality="d", style="direct", shots=0, extraction_style="prefill_last_token",
            num_layers=num_layers, dim=dim)

        done = 0
        for i in range(n):
            sid = ids[i]
            if store.has(sid):
                continue
            sample = values[i * v * t:(i + 1) * v * t]
            system_text, user_text = build_prompt(manifest, sample, v, t, task_description,
                                                  question)
            messages = [{"role": "system", "content": system_text},
                        {"role": "user", "content": user_text}]
            try:
                input_ids = tok.apply_chat_template(messages, add_generation_prompt=True,
                                                    return_tensors="pt").to(model.device)
            except Exception:
                text = system_text + "\n" + user_text
                input_ids = tok(text, return_tensors="pt").input_ids.to(model.device)
            if input_ids.shape[1] > getattr(model.config, "max_position_embeddings", 1 << 20):
                store.add_skip(sid, f"context overflow: {input_ids.shape[1]} tokens")
                continue
            with torch.no_grad():
                out = model(input_ids)
            # hidden_states: (L+1) tensors of [1, seq, D]; final-token vectors
            matrix = []
            for layer in out.hidden_states:
                matrix.extend(layer[0, -1, :].float().cpu().tolist())
            store.put(sid, matrix)
            done += 1
            if done % 25 == 0:
                print(f"{split}: {done} extracted", flush=True)
        print(f"{split}: store at {store.dir} ({len(store.ids())} records)", flush=True)


if __name__ == "__main__":
    sys.exit(main())
