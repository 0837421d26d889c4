"""Tensor side of the model bridge: loads a causal-LM pair with
transformers and answers NDJSON logit requests on stdio.

Emits {"id": null, "error": "..."} and exits nonzero if the models cannot
be loaded (missing packages, missing weights, OOM). Both models must share
one vocabulary; the handshake advertises it.
"""

import argparse
import json
import sys


def fail(message: str) -> None:
    sys.stdout.write(json.dumps({"id": None, "error": message}) + "\n")
    sys.stdout.flush()
    sys.exit(1)


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--slm", required=True)
    parser.add_argument("--llm", required=True)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--dtype", default="float32")
    parser.add_argument("--max-context", type=int, default=2048)
    args = parser.parse_args()

    try:
        import torch
        from transformers import AutoModelForCausalLM, AutoTokenizer
    except Exception as exc:  # noqa: BLE001
        fail(f"transformers/torch unavailable: {exc}")
        return

    try:
        tokenizer = AutoTokenizer.from_pretrained(args.slm)
        dtype = getattr(torch, args.dtype)
        models = {
            "slm": AutoModelForCausalLM.from_pretrained(args.slm, torch_dtype=dtype),
            "llm": AutoModelForCausalLM.from_pretrained(args.llm, torch_dtype=dtype),
        }
    except Exception as exc:  # noqa: BLE001
        fail(f"model load failed: {exc}")
        return

    vocab_sizes = {role: model.get_input_embeddings().weight.shape[0] for role, model in models.items()}
    if vocab_sizes["slm"] != vocab_sizes["llm"]:
        fail(f"models do not share a vocabulary: {vocab_sizes}")
        return
    vocab_size = vocab_sizes["slm"]
    eos_id = tokenizer.eos_token_id if tokenizer.eos_token_id is not None else 0

    for model in models.values():
        model.to(args.device)
        model.eval()

    sys.stdout.write(json.dumps({"hello": {"vocab_size": vocab_size, "eos_id": eos_id}}) + "\n")
    sys.stdout.flush()

    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        req_id = req.get("id")
        tokens = req.get("tokens", [])
        role = req.get("role")
        if role not in models:
            sys.stdout.write(json.dumps({"id": req_id, "error": f"unknown role {role!r}"}) + "\n")
            sys.stdout.flush()
            continue
        if not tokens:
            sys.stdout.write(json.dumps({"id": req_id, "error": "empty sequence"}) + "\n")
            sys.stdout.flush()
            continue
        try:
            with torch.inference_mode():
                ids = torch.tensor([tokens[-args.max_context :]], dtype=torch.long, device=args.device)
                logits = models[role](input_ids=ids).logits[0, -1, :].float().cpu().tolist()
        except Exception as exc:  # noqa: BLE001
            sys.stdout.write(json.dumps({"id": req_id, "error": f"forward pass failed: {exc}"}) + "\n")
            sys.stdout.flush()
            continue
        sys.stdout.write(json.dumps({"id": req_id, "logits": logits}) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
