#!/usr/bin/env python3
"""Smoke test for the dialoplan Python bindings.

Builds the extension with cargo (pass --no-build to skip), copies the
cdylib next to a temp import path, and exercises the main types and
operations end to end.
"""

import argparse
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]


def build_and_import(no_build: bool):
    if not no_build:
        subprocess.run(
            ["cargo", "build", "-p", "dialoplan-py", "--release"],
            cwd=REPO_ROOT,
            check=True,
        )
    candidates = [
        REPO_ROOT / "target" / "release" / "libdialoplan.so",
        REPO_ROOT / "target" / "debug" / "libdialoplan.so",
        REPO_ROOT / "target" / "release" / "libdialoplan.dylib",
        REPO_ROOT / "target" / "debug" / "libdialoplan.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("no built extension found; run without --no-build")
    stage = Path(tempfile.mkdtemp(prefix="dialoplan-py-"))
    shutil.copy2(built, stage / "dialoplan.so")
    sys.path.insert(0, str(stage))
    import dialoplan

    return dialoplan


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--no-build", action="store_true")
    args = parser.parse_args()
    dp = build_and_import(args.no_build)

    # catalogs
    cat = dp.Catalog("esconv")
    assert cat.size == 8 and len(cat) == 8
    assert cat.action_name(6) == "Reflection of feelings"
    assert cat.noop_index == 5
    assert "elaborate" in cat.strategy_prompt(1)
    assert dp.Catalog("p4g").size == 19

    # state building and serialization
    case = dp.Case(
        "esconv",
        "I think I will be losing my job soon.",
        text_slots={"emotion_type": "fear", "problem_type": "job crisis"},
    )
    state = dp.State(case)
    state.append_system("It sounds like you're feeling uncertain about your future.")
    state.append_user("I feel a deep sense of dread.")
    state.add_emotion("dread")
    assert state.turn == 1
    text = state.serialize()
    assert text.endswith("Next action:")
    assert "Emotions: dread;" in text
    assert "Emotions:" not in state.serialize(include_emotions=False)
    prompt = state.policy_prompt(k=4)
    assert "Choose the TOP 4 most suitable actions" in prompt
    assert "Reply ONLY in the given format: 1,2,4,5" in prompt

    # prior operations
    assert dp.parse_topk("6,8,3,1", "esconv", 4) == [6, 8, 3, 1]
    assert dp.parse_topk("no idea", "esconv", 4) == [5, 1, 2, 3]
    assert dp.project("Reflection of feelings", "esconv") == 6
    assert dp.project("I would gently restate what they said", "esconv") == 8
    assert dp.project("qzx", "esconv") == 5
    prior = dp.beam_prior(
        [
            ("Reflection of feelings", math.log(0.5)),
            ("6: reflect", math.log(0.25)),
            ("Question", math.log(0.25)),
        ],
        "esconv",
    )
    assert abs(prior[6] - 0.75) < 1e-12 and abs(prior[1] - 0.25) < 1e-12
    assert dp.top_k(prior, "esconv", 1) == [6]
    assert dp.top_k({4: 1.0}, "esconv", 3) == [4, 1, 2]

    # value head: scoring, selection, a little bandit training
    q = dp.QHead(embed_dim=32, hidden1=32, hidden2=32, seed=0)
    v = q.forward(text, "Question")
    assert isinstance(v, float) and math.isfinite(v)
    raw, probs = q.score(text, ["Question", "Information", "Others"])
    assert len(raw) == 3 and abs(sum(probs) - 1.0) < 1e-9
    pick = q.select(text, [6, 8, 3, 1], "esconv", epsilon=0.5)
    assert pick in (6, 8, 3, 1)

    buf = dp.ReplayBuffer(capacity=512, seed=1)
    for i in range(128):
        ctx = f"context {i % 4}"
        action = (i % 5) + 1
        reward = 1.0 if action == (i % 4) % 5 + 1 else -1.0
        buf.push(ctx, action, reward)
    assert len(buf) == 128
    first = q.td_update(buf, "cima", batch_size=32, learning_rate=1e-3)
    last = first
    for _ in range(300):
        last = q.td_update(buf, "cima", batch_size=32, learning_rate=1e-3)
    assert last < first, f"TD loss did not decrease: {first} -> {last}"
    assert q.train_steps == 301

    # checkpoint round trip preserves outputs
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "head.ckpt"
        q.save(path)
        q2 = dp.QHead(embed_dim=32, hidden1=32, hidden2=32, seed=999)
        q2.load(path)
        assert q2.forward(text, "Question") == q.forward(text, "Question")

    # scripted end-to-end simulation
    m = dp.simulate(task="esconv", episodes=6, seed=7)
    assert m["n_episodes"] == 6
    assert 0.0 <= m["sr"] <= 1.0
    assert 1.0 <= m["at"] <= 8.0
    assert m["sl_avg"] is None
    mcb = dp.simulate(task="cb", episodes=6, seed=7)
    assert mcb["sl_avg"] is not None
    # determinism across identically seeded calls
    again = dp.simulate(task="esconv", episodes=6, seed=7)
    assert again["at"] == m["at"] and again["sr"] == m["sr"]

    print("dialoplan python smoke test: PASS")


if __name__ == "__main__":
    main()
