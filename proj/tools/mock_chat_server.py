#!/usr/bin/env python3
"""Deterministic stand-in for a chat-completions endpoint.

Answers generator prompts by recombining the top-level terms of the
examples it is shown. Replies are a pure function of the prompt text and
how many times that prompt has been seen, so recording against this server
is reproducible. Some replies are deliberately unusable (prose only, domain
errors, out-of-range indices, verbatim copies) to exercise the retry path.

    python3 tools/mock_chat_server.py --port 8765
    EBG_API_URL=http://127.0.0.1:8765/v1/chat/completions ebg generate ...
"""

import argparse
import hashlib
import json
import random
import re
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

TERM_TEMPLATES = [
    "sin(x[{i}])",
    "abs(x[{i}] - x[{j}])",
    "x[{i}]*x[{j}]",
    "sqrt(abs(x[{i}]))",
    "x[{i}]**2",
    "sinh(x[{i}])",
    "abs(x[{i}])",
    "sin(x[{i}])*x[{j}]",
    "x[{i}]**2/(1 + abs(x[{j}]))",
    "abs(sin(x[{i}]*x[{j}]))",
]


def split_terms(expr):
    """Top-level summands of an expression, signs kept with the term."""
    terms, depth, start = [], 0, 0
    for k, c in enumerate(expr):
        if c in "([":
            depth += 1
        elif c in ")]":
            depth -= 1
        elif depth == 0 and k > 0 and expr[k - 1] == " " and c in "+-" and expr[k + 1 : k + 2] == " ":
            terms.append(expr[start:k].strip())
            start = k
    terms.append(expr[start:].strip())
    out = []
    for t in terms:
        t = t.strip()
        if t.startswith("+ "):
            t = t[2:]
        if t:
            out.append(t)
    return out


def join_terms(terms):
    text = ""
    for t in terms:
        if not text:
            text = "-" + t[2:] if t.startswith("- ") else t
        elif t.startswith("- "):
            text += " " + t
        else:
            text += " + " + t
    return text


def parse_prompt(prompt):
    dim = int(re.search(r"Create a new (\d+)-dimensional problem", prompt).group(1))
    body = prompt.split("### Instructions ###")[0]
    examples = []
    for block in re.split(r"Example \d+:\n", body)[1:]:
        line = block.strip().splitlines()[0]
        if line.startswith("f(x) = "):
            line = line[len("f(x) = ") :]
        examples.append(line)
    kind = "init" if "Example 1:\nf(x) = " in prompt else ("crossover" if len(examples) == 2 else "mutation")
    return dim, kind, examples


def fresh_term(rng, dim):
    i = rng.randrange(dim)
    j = (i + 1 + rng.randrange(max(dim - 1, 1))) % dim if dim > 1 else 0
    return rng.choice(TERM_TEMPLATES).format(i=i, j=j)


def propose(rng, dim, kind, examples):
    if kind == "crossover":
        a, b = split_terms(examples[0]), split_terms(examples[1])
        terms = a[: max(1, len(a) // 2)] + b[len(b) // 2 :]
    elif kind == "mutation":
        terms = split_terms(examples[0])
        if len(terms) > 1 and rng.random() < 0.5:
            terms[rng.randrange(len(terms))] = fresh_term(rng, dim)
        else:
            terms.append(fresh_term(rng, dim))
    else:
        pool = [t for e in examples for t in split_terms(e)]
        terms = rng.sample(pool, min(len(pool), 2)) + [fresh_term(rng, dim)]
    if len(terms) > 6:
        terms = terms[:6]
    return join_terms(terms)


def reply(prompt, occurrence):
    seed = hashlib.sha256(f"{occurrence}:{prompt}".encode()).digest()
    rng = random.Random(seed)
    dim, kind, examples = parse_prompt(prompt)
    roll = rng.random()
    if roll < 0.06:
        return "I can help with that. The function below should favor the first algorithm."
    if roll < 0.12:
        return "Problem: f(x) = sqrt(x[0]) + x[1]**2"
    if roll < 0.16:
        return f"Problem: f(x) = x[{dim + 2}]**2 + x[0]"
    if roll < 0.20:
        return "Problem: f(x) = " + examples[0]
    expr = propose(rng, dim, kind, examples)
    style = rng.random()
    if style < 0.2:
        return f"```python\nf(x) = {expr}\n```"
    if style < 0.3:
        return f"Here is a new problem:\nProblem: f(x) = {expr}"
    return f"Problem: f(x) = {expr}"


class Handler(BaseHTTPRequestHandler):
    seen = {}

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length))
            prompt = body["messages"][-1]["content"]
            n = Handler.seen.get(prompt, 0)
            Handler.seen[prompt] = n + 1
            content = reply(prompt, n)
        except (KeyError, ValueError, AttributeError, IndexError) as e:
            self.send_response(400)
            self.end_headers()
            self.wfile.write(str(e).encode())
            return
        payload = json.dumps(
            {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8765)
    args = ap.parse_args()
    server = ThreadingHTTPServer((args.host, args.port), Handler)
    print(f"listening on http://{args.host}:{args.port}/v1/chat/completions", flush=True)
    server.serve_forever()


if __name__ == "__main__":
    main()
