"""Writes the offline demo: a 15-page synthetic document and scripted backends."""
import json
from pathlib import Path

from PIL import Image, ImageDraw

HERE = Path(__file__).resolve().parent
DOC = "history-7"

EXCERPTS = [
    {"batch": 1, "page": 2, "attribution": "Textbook Narrative",
     "quote": "Our ancestors heroically defended the homeland against the barbarian invaders, "
              "proving that the nation was destined to endure.",
     "reasoning": "Teleological national framing in the authorial voice."},
    {"batch": 1, "page": 4, "attribution": "Primary Source Usage",
     "quote": "\"Let every loyal son take up arms against the foreign oppressor!\" "
              "(Proclamation of the provisional committee, 1848)",
     "reasoning": "Quoted call to arms; check whether the textbook contextualizes it."},
    {"batch": 2, "page": 8, "attribution": "Textbook Narrative",
     "quote": "The minority communities of the region played no significant role in these events.",
     "reasoning": "Dismisses the role of minority groups without evidence."},
]

JURIES = {
    # juror: (category, severity, confidence)
    "history-7-b1-e1": [("Narrative Framing", 3, 0.8), ("Teleological Narrative", 3, 0.9), ("Narrative Framing", 4, 0.75),
                        ("Narrative Framing", 3, 0.6), ("Moral Loading", 3, 0.5)],
    "history-7-b1-e2": [("Uncontextualized Source", 2, 0.8), ("Uncontextualized Source", 2, 0.8),
                        ("Primary Source Framing", 2, 0.8), ("Uncontextualized Source", 2, 0.8),
                        ("Uncontextualized Source", 4, 0.6)],
    "history-7-b2-e1": [("Marginalization of Minorities", 5, 0.8), ("Marginalization of Minorities", 4, 0.7),
                        ("Omission / Underdevelopment", 5, 0.9), ("Marginalization of Minorities", 5, 0.85),
                        ("Marginalization of Minorities", 2, 0.4)],
}


def write(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")


def pages() -> list:
    (HERE / "pages").mkdir(exist_ok=True)
    names = []
    for n in range(1, 16):
        img = Image.new("RGB", (320, 440), "white")
        draw = ImageDraw.Draw(img)
        draw.text((20, 20), f"{DOC}  page {n}", fill="black")
        for line in range(6):
            draw.line((20, 70 + line * 40, 300, 70 + line * 40), fill="gray")
        name = f"pages/p{n:03d}.png"
        img.save(HERE / name)
        names.append(name)
    return names


def screener() -> dict:
    by_batch = {1: [], 2: [], 3: []}
    for e in EXCERPTS:
        by_batch[e["batch"]].append({k: e[k] for k in ("quote", "page", "attribution", "reasoning")})
    responses = [
        {"match": "Pages: 1-5\n", "json": by_batch[1], "input_tokens": 7800, "output_tokens": 420},
        {"match": "Pages: 6-10\n",
         "text": "Reviewing pages 6-10. Page 8 contains one passage worth flagging.\n```json\n"
                 + json.dumps(by_batch[2], indent=1) + "\n```",
         "input_tokens": 7800, "output_tokens": 260},
        {"match": "Pages: 11-15\n", "text": "No issues found on these pages.", "input_tokens": 7800,
         "output_tokens": 12},
        {"match": "Pages: 11-15\n", "json": [], "input_tokens": 7900, "output_tokens": 4},
    ]
    return {"on_exhaustion": "fail", "responses": responses}


def juror(index: int) -> dict:
    responses = []
    for e in EXCERPTS:
        excerpt_id = f"{DOC}-b{e['batch']}-e{1 if e['page'] != 4 else 2}"
        category, severity, confidence = JURIES[excerpt_id][index]
        key = f"Excerpt ID: {excerpt_id}\n"
        payload = {"attribution": e["attribution"], "category": category, "severity": severity,
                   "confidence": confidence,
                   "reasoning": f"Juror {index + 1}: assessed as {category.lower()} at severity {severity}."}
        if index == 1 and excerpt_id == "history-7-b2-e1":
            responses.append({"match": key, "text": "{\"severity\": \"high\"}", "input_tokens": 900,
                              "output_tokens": 20})
        responses.append({"match": key, "json": payload, "input_tokens": 900, "output_tokens": 180})
    return {"on_exhaustion": "fail", "responses": responses}


def meta() -> dict:
    decisions = {
        "history-7-b1-e1": (3, "Narrative Framing", False),
        "history-7-b1-e2": (2, "Uncontextualized Source", False),
        "history-7-b2-e1": (5, "Marginalization of Minorities", True),
    }
    responses = []
    for excerpt_id, (severity, category, review) in decisions.items():
        responses.append({"match": f"Excerpt ID: {excerpt_id}\n",
                          "json": {"severity": severity, "category": category, "human_review": review,
                                   "justification": f"The best-supported assessment is severity {severity}."},
                          "input_tokens": 2400, "output_tokens": 300})
    return {"on_exhaustion": "fail", "responses": responses}


def main() -> None:
    write(HERE / f"{DOC}.manifest.json", {"schema_version": 1, "document_id": DOC, "pages": pages()})
    write(HERE / "scripts/screener.json", screener())
    for i in range(5):
        write(HERE / f"scripts/juror-{i + 1}.json", juror(i))
    write(HERE / "scripts/meta.json", meta())
    price = {"input_usd_per_million": 1.0, "output_usd_per_million": 4.0}
    backends = {"screener": {"kind": "scripted", "script": "scripts/screener.json", "price": price,
                             "max_output_tokens": 4096},
                "meta": {"kind": "scripted", "script": "scripts/meta.json", "price": price}}
    for i in range(5):
        backends[f"juror-{i + 1}"] = {"kind": "scripted", "script": f"scripts/juror-{i + 1}.json", "price": price,
                                      "max_output_tokens": 16000 if i < 2 else 4096}
    write(HERE / "demo.config.json", {
        "schema_version": 1,
        "preset": "full",
        "documents": [f"{DOC}.manifest.json"],
        "output_dir": "../runs/demo",
        "batch_size": 5,
        "backends": backends,
        "screening": {"backend": "screener"},
        "jury": {"jurors": [f"juror-{i + 1}" for i in range(5)], "calibration": True},
        "meta": {"backend": "meta", "strategy": "heuristic"},
        "transport_retry": {"max_attempts": 3, "base_delay_ms": 0},
    })


if __name__ == "__main__":
    main()
