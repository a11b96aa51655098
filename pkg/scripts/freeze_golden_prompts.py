#!/usr/bin/env python3
"""Regenerate the golden prompt files under tests/golden/v1/.

Run only when the assembly order or the fixtures change intentionally; the
test suite compares against these files byte for byte.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from companion_engine.config import PromptFormat
from companion_engine.prompter import apply_chat_template, assemble_prompt

from tests.prompt_fixtures import FIXED_NOW, build_prompt_fixtures


def main() -> None:
    golden_dir = ROOT / "tests" / "golden" / "v1"
    golden_dir.mkdir(parents=True, exist_ok=True)
    for prompt_format in PromptFormat:
        fixtures = build_prompt_fixtures(prompt_format)
        for name, (context, state, runtime, chat) in fixtures.items():
            prompt = assemble_prompt(context, state, runtime, FIXED_NOW, chat=chat)
            rendered = apply_chat_template(prompt)
            path = golden_dir / f"{name}.{prompt_format.value}.txt"
            path.write_text(rendered, encoding="utf-8")
            print(f"wrote {path.relative_to(ROOT)} ({len(rendered)} bytes)")


if __name__ == "__main__":
    main()
