#!/usr/bin/env python3
"""Regenerates the demo suite and corpus under data/."""

import json
import pathlib

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def fenced(obj):
    return "```json\n" + json.dumps(obj) + "\n```"


def call(tool, args):
    return "Calling the tool.\n" + fenced({"tool": tool, "arguments": args})


APPROVE = fenced({"verdict": "APPROVE", "feedback": ""})


def tool(name, description, params, body):
    return {
        "name": name,
        "description": description,
        "parameters": params,
        "responses": [{"match": {}, "status": "OK", "body": body}],
    }


MOVIE_TOOLS = [
    tool("search_movie", "Search movies by title. Returns matching movies.",
         [{"name": "query", "type": "string", "required": True, "description": "title words"}],
         {"results": [{"title": "Dune", "id": 438631}]}),
    tool("get_credits", "Cast and crew of a movie.",
         [{"name": "movie_id", "type": "number", "required": True, "description": "movie id"}],
         {"director": "Denis Villeneuve"}),
    tool("get_reviews", "User reviews of a movie.",
         [{"name": "movie_id", "type": "number", "required": True, "description": "movie id"}],
         {"reviews": ["great"]}),
    tool("trending", "Movies trending today.", [], {"results": []}),
]

ARGS = {"search_movie": {"query": "Dune"}, "get_credits": {"movie_id": 438631}}


def movie_suite():
    tasks, faults, sections = [], [], {}
    for i in range(8):
        tid = f"movie-{i:02d}"
        gold = ["search_movie"] + (["get_credits"] if i % 2 else [])
        tasks.append({"id": tid, "description": f"Find movie number {i} and report who directed it",
                      "candidate_tools": [t["name"] for t in MOVIE_TOOLS], "gold_tools": gold})
        faulty = i in (2, 5)
        if faulty:
            faults.append({"tool": "search_movie", "trigger": "FIRST_N", "n": 1,
                           "error_message": "search backend timed out", "tasks": [tid]})
        g, e, r = [], [], []
        for name in gold:
            g.append(f"USE {name}: look up {name}")
            r.append(APPROVE)
            e.append(call(name, ARGS[name]))
            if faulty and name == "search_movie":
                r.append(fenced({"verdict": "REVISE", "feedback": "the search timed out; call it again"}))
                e.append(call(name, ARGS[name]))
            r.append(APPROVE)
        g.append(f"FINISH: answer {i}")
        sections[tid] = {"GROUNDING": g, "EXECUTION": e, "REVIEW": r}
    return tasks, {"tools": MOVIE_TOOLS, "faults": faults}, {"tasks": sections}


def corpus():
    """Twelve corpus tasks: seven pass the default filter, one of them a near duplicate."""
    def words(n, stem):
        return " ".join(f"{stem}{k}" for k in range(n))

    shapes = {
        "c01": (10, 100), "c02": (9, 120), "c03": (12, 100), "c04": (10, 99), "c05": (15, 140),
        "c06": (10, 100), "c07": (11, 60), "c08": (20, 100), "c09": (10, 100), "c10": (3, 300),
        "c11": (10, 100), "c12": (10, 100),
    }
    records, sections = [], {}
    for tid, (n_tools, n_words) in shapes.items():
        tools = []
        for k in range(n_tools):
            t = tool(f"{tid}_t{k}", words(n_words, tid + "w"), [], {"ok": True})
            t["deprecated"] = tid == "c06" and k == 3
            tools.append(t)
        names = [t["name"] for t in tools]
        description = f"Task {tid}: " + words(6, tid + "q")
        if tid == "c12":
            description = "Task c09: " + words(6, "c09q")  # near duplicate of c09
        records.append({"id": tid, "origin_id": "origin-" + tid, "description": description,
                        "candidate_tools": names, "gold_tools": [names[0]], "tools": tools})
        sections[tid] = {"GROUNDING": [f"USE {names[0]}: call it", f"FINISH: done {tid}"],
                         "EXECUTION": [call(names[0], {})], "REVIEW": [APPROVE, APPROVE]}
    return records, {"tasks": sections}


def main():
    DATA.mkdir(exist_ok=True)
    tasks, manifest, script = movie_suite()
    (DATA / "tasks.jsonl").write_text("".join(json.dumps(t) + "\n" for t in tasks))
    (DATA / "tools.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (DATA / "script.json").write_text(json.dumps(script, indent=2) + "\n")
    records, teacher = corpus()
    (DATA / "corpus.jsonl").write_text("".join(json.dumps(r) + "\n" for r in records))
    (DATA / "teacher.json").write_text(json.dumps(teacher, indent=2) + "\n")


if __name__ == "__main__":
    main()
