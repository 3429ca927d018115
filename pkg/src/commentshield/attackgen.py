"""Adversarial comment generation.

Three attack styles are produced per news item: perception-level (shallow
lexical distortion), cognition-level (flawed causal reasoning), and
socio-emotional-level (fear/conspiracy framing). The primary path asks an
OpenAI-compatible chat endpoint to write them with a two-step
chain-of-thought prompt; a deterministic template fallback covers offline
runs and tests.
"""

import concurrent.futures
import re
import time
from dataclasses import dataclass

import requests

from .corpus import ATTACK_CATEGORIES, Comment, CommentCategory, CommentSource, NewsItem, attack_rank
from .rng import derive_rng

LEVEL_NAMES = {
    CommentCategory.PERCEPTION: "perception-level",
    CommentCategory.COGNITION: "cognition-level",
    CommentCategory.SOCIO_EMOTIONAL: "socio-emotional-level",
}

_PROMPT_TEMPLATE = """Follow the news and its original comment, please generate a {level} attack comment. The attack comment should interfere with the judgment of the news' authenticity, while being related to the news content. Let's think step by step. First, identify the key points of the news and original comment. Second, generate the {level} attack comment.

Output Format:
Step 1: Identify the key points:
1): <core_content_of_the_news>
2): <main_opinion_of_the_original_comment>
3): <target_direction_of_misleading> (e.g., make real news be judged as fake)

Step 2:
Generate the {level} Attack Comment:

Input News: {news}
Input Original Comment: {comment}
Generated Attack Comment: <generated_attack_comment>"""


class AttackGenError(Exception):
    """Base error for attack comment generation."""


class AuthenticationError(AttackGenError):
    """Endpoint rejected the API key; never retried."""


class EndpointError(AttackGenError):
    """Endpoint unreachable or persistently failing."""


class ParseError(AttackGenError):
    """Model response did not follow the expected two-step format."""


@dataclass(frozen=True)
class AttackPrompt:
    attack_level: CommentCategory
    news_text: str
    original_comment: str
    rendered: str


@dataclass(frozen=True)
class GenerationResult:
    key_points: tuple[str, str, str]
    attack_comment: str
    raw_response: str


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key: str
    max_parallel: int = 4
    timeout: float = 30.0
    max_retries: int = 3
    temperature: float = 0.8
    retry_backoff: float = 1.0

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ValueError(f"max_parallel must be >= 1, got {self.max_parallel}")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")


def render_prompt(level: CommentCategory, news: str, comment: str) -> AttackPrompt:
    """Fill the chain-of-thought template for one attack level."""
    if level not in LEVEL_NAMES:
        raise ValueError(f"{level} is not an attack category")
    if not news.strip():
        raise ValueError("empty news text")
    if not comment.strip():
        raise ValueError("empty original comment")
    rendered = _PROMPT_TEMPLATE.format(level=LEVEL_NAMES[level], news=news, comment=comment)
    return AttackPrompt(
        attack_level=level, news_text=news, original_comment=comment, rendered=rendered
    )


_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*\n(.*?)\n```\s*$", re.DOTALL)
_MARKER_RE = re.compile(r"generated attack comment\s*:", re.IGNORECASE)
_KEY_POINT_RE = re.compile(r"^\s*{n}\s*[\).:]+\s*(\S.*)$", re.MULTILINE)
_SECTION_RE = re.compile(
    r"^\s*(step\s*\d|input news\s*:|input original comment\s*:|output format|#{1,6}\s|---)",
    re.IGNORECASE,
)


def _strip_fences(text: str) -> str:
    match = _FENCE_RE.match(text.strip())
    return match.group(1) if match else text


def parse_response(raw: str) -> GenerationResult:
    """Extract the three step-1 key points and the step-2 attack comment.

    Tolerates surrounding whitespace and markdown fences; anything after
    the comment that looks like a new section header is dropped.
    """
    text = _strip_fences(raw)
    points = []
    for n in (1, 2, 3):
        match = re.search(_KEY_POINT_RE.pattern.format(n=n), text, re.MULTILINE)
        points.append(match.group(1).strip() if match else "")
    marker = _MARKER_RE.search(text)
    if marker is None:
        raise ParseError("missing 'Generated Attack Comment' marker")
    tail = text[marker.end() :]
    kept_lines = []
    for line in tail.splitlines():
        if kept_lines and _SECTION_RE.match(line):
            break
        kept_lines.append(line)
    comment = "\n".join(kept_lines).strip()
    comment = _strip_fences(comment).strip().strip("`").strip()
    if not comment:
        raise ParseError("empty attack comment after the marker")
    return GenerationResult(
        key_points=(points[0], points[1], points[2]),
        attack_comment=comment,
        raw_response=raw,
    )


def _post_chat(prompt: AttackPrompt, cfg: EndpointConfig, session: requests.Session) -> str:
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    body = {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt.rendered}],
        "temperature": cfg.temperature,
    }
    headers = {"Authorization": f"Bearer {cfg.api_key}"}
    response = session.post(url, json=body, headers=headers, timeout=cfg.timeout)
    if response.status_code in (401, 403):
        raise AuthenticationError(
            f"authentication failed (HTTP {response.status_code}) at {cfg.base_url}"
        )
    if response.status_code != 200:
        raise EndpointError(f"HTTP {response.status_code} from {cfg.base_url}")
    try:
        return response.json()["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise EndpointError(f"malformed completion payload: {exc}") from None


def _generate_one(
    prompt: AttackPrompt, cfg: EndpointConfig, session: requests.Session
) -> GenerationResult:
    """One generation with retries; auth failures are surfaced immediately."""
    last: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        try:
            return parse_response(_post_chat(prompt, cfg, session))
        except AuthenticationError:
            raise
        except (EndpointError, ParseError, requests.RequestException) as exc:
            last = exc
            if attempt < cfg.max_retries and cfg.retry_backoff > 0:
                time.sleep(cfg.retry_backoff * (2**attempt))
    raise EndpointError(f"generation failed after {cfg.max_retries + 1} attempts: {last}")


def generate_attacks(
    item: NewsItem, per_category: int, cfg: EndpointConfig, seed: int = 0
) -> list[Comment]:
    """Generate per_category comments for each of the three attack levels.

    Each generation is seeded with one of the item's original comments,
    chosen by a per-sample stream. Requests run with at most
    cfg.max_parallel in flight; results come back ordered by (level,
    sample index). A level whose samples all fail raises; partial
    failures are tolerated.
    """
    if per_category < 1:
        raise ValueError(f"per_category must be >= 1, got {per_category}")
    originals = item.comments_of(CommentCategory.ORIGINAL)
    if not originals:
        raise ValueError(f"item {item.id!r} has no original comments to seed generation")

    jobs: list[tuple[CommentCategory, int, AttackPrompt]] = []
    for level in ATTACK_CATEGORIES:
        for k in range(per_category):
            rng = derive_rng(seed, "attackgen", item.id, level.value, k)
            context = rng.choice(originals)
            jobs.append((level, k, render_prompt(level, item.text, context.text)))

    session = requests.Session()
    results: dict[tuple[CommentCategory, int], GenerationResult] = {}
    failures: dict[tuple[CommentCategory, int], Exception] = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.max_parallel) as pool:
        futures = {
            pool.submit(_generate_one, prompt, cfg, session): (level, k)
            for level, k, prompt in jobs
        }
        for future in concurrent.futures.as_completed(futures):
            key = futures[future]
            try:
                results[key] = future.result()
            except AuthenticationError:
                for other in futures:
                    other.cancel()
                raise
            except AttackGenError as exc:
                failures[key] = exc

    comments: list[Comment] = []
    for level in ATTACK_CATEGORIES:
        level_results = [results[(level, k)] for k in range(per_category) if (level, k) in results]
        if not level_results:
            raise EndpointError(
                f"all {per_category} generations failed for {level.value}: "
                f"{failures[(level, 0)]}"
            )
        comments.extend(
            Comment(text=r.attack_comment, category=level, source=CommentSource.LLM_GENERATED)
            for r in level_results
        )
    return comments


_WORD_RE = re.compile(r"\w+", re.UNICODE)

_PERCEPTION_TEMPLATES = (
    "so it was actually {typo}?? the wording keeps changing between reports",
    "i saw this elsewhere and it said {typo}, not what this post claims",
    "pretty sure the first version wrote {typo}, someone keeps editing the story",
    "the caption clearly says {typo}, they cannot even keep the spelling straight",
)

_COGNITION_TEMPLATES = (
    "if {a} were real then {b} would have reacted by now, since they have not this is fabricated",
    "everyone knows {a} always leads to {b}, so the official story cannot be true",
    "{a} came right after {b}, no coincidence, one obviously caused the other",
    "no source mentions {a} and {b} together, which proves the account is fabricated",
)

_SOCIO_TEMPLATES = (
    "they do not want you to know the truth about {tok}, share before it gets taken down",
    "wake up, the people behind {tok} have been lying to us from the start",
    "everyone i know is terrified about {tok}, the media is hiding how bad it is",
    "classic coverup, whoever controls {tok} controls the story, do not trust a word",
)


def _perturb_token(token: str, rng) -> str:
    """Seeded character-level typo: swap, drop, or double one character."""
    ops = ["swap", "drop", "double"]
    rng.shuffle(ops)
    for op in ops:
        if op == "swap" and len(token) >= 2:
            i = rng.randrange(len(token) - 1)
            if token[i] != token[i + 1]:
                return token[:i] + token[i + 1] + token[i] + token[i + 2 :]
        elif op == "drop" and len(token) >= 2:
            i = rng.randrange(len(token))
            return token[:i] + token[i + 1 :]
        elif op == "double":
            i = rng.randrange(len(token))
            return token[:i] + token[i] + token[i:]
    return token + token[-1]


def generate_fallback(item: NewsItem, level: CommentCategory, seed: int) -> Comment:
    """Deterministic template-based attack comment.

    A pure function of (item, level, seed): the same triple always yields
    the same text, and the styling matches the level (typo of a news
    token, fallacious causal claim, or fear/conspiracy framing).
    """
    if level not in LEVEL_NAMES:
        raise ValueError(f"{level} is not an attack category")
    rng = derive_rng(seed, "fallback", item.id, level.value)
    tokens = _WORD_RE.findall(item.text)
    if not tokens:
        tokens = [item.id]
    content = [t for t in tokens if len(t) >= 4] or tokens

    if level == CommentCategory.PERCEPTION:
        token = rng.choice(content)
        text = rng.choice(_PERCEPTION_TEMPLATES).format(typo=_perturb_token(token, rng))
    elif level == CommentCategory.COGNITION:
        a = rng.choice(content)
        b = rng.choice(content)
        text = rng.choice(_COGNITION_TEMPLATES).format(a=a, b=b)
    else:
        text = rng.choice(_SOCIO_TEMPLATES).format(tok=rng.choice(content))
    return Comment(text=text, category=level, source=CommentSource.TEMPLATE_FALLBACK)
