"""Strategy config files: backends, templates, retry policy, concurrency.

Minimal TOML shape:

    concurrency = 4

    [retry]
    retries = 2
    backoff_s = 0.5

    [backends.primary]
    id = "local-mllm"
    kind = "multimodal_endpoint"
    url = "http://127.0.0.1:9000/complete"

    [backends.external]
    id = "text-llm"
    kind = "text_endpoint"
    url = "http://127.0.0.1:9001/complete"

    [templates]
    prefer = "... {description_1} ... {description_2} ..."
"""

from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends import JudgeBackend, RetryPolicy, backend_from_config
from .strategy import Strategy, StrategyConfig, StrategyError, default_templates_for
from .templates import PromptTemplate, TemplateRole


def load_strategy_config(
    path: str | Path,
    strategy: Strategy,
    judge_id: str | None = None,
    primary_override: JudgeBackend | None = None,
    external_override: JudgeBackend | None = None,
) -> tuple[StrategyConfig, int]:
    """Build a StrategyConfig from a TOML file; returns (config, concurrency).

    Backend overrides let callers substitute replay or simulated backends
    without editing the file.
    """
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)

    backends = doc.get("backends", {})
    primary = primary_override
    if primary is None:
        if "primary" not in backends:
            raise StrategyError(f"{path}: missing [backends.primary]")
        primary = backend_from_config(backends["primary"])
    external = external_override
    if external is None and "external" in backends:
        external = backend_from_config(backends["external"])

    templates = default_templates_for(strategy)
    for key, text in doc.get("templates", {}).items():
        role = TemplateRole(key)
        templates[role] = PromptTemplate(role, text)

    retry_doc = doc.get("retry", {})
    retry = RetryPolicy(
        retries=int(retry_doc.get("retries", 2)),
        backoff_s=float(retry_doc.get("backoff_s", 0.5)),
    )
    config = StrategyConfig(
        strategy=strategy,
        primary_backend=primary,
        external_backend=external if _needs_external(strategy) else None,
        templates=templates,
        retry=retry,
        judge_id=judge_id,
        media_root=doc.get("media_root"),
    )
    return config, int(doc.get("concurrency", 1))


def _needs_external(strategy: Strategy) -> bool:
    from .strategy import STEP_PLANS

    return any(step.backend == "external" for step in STEP_PLANS[strategy])
