"""Regenerate the desk-scale fixtures under src/reflectkg/fixtures/.

The mock rule table is derived from each question's scripted gold route:
gold relations and entities are marked relevant, off-route tails on the
gold relation are marked unrelevant, the final node answers, and "trap"
relations score high at the first hop but dead-end at the second.  Every
other request falls through to a catch-all that leans towards
``[Partially Relevant]`` so distractor paths always score below gold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from reflectkg.kg import KnowledgeGraph, RelationRef, Triple, parse_node

OUT = Path(__file__).resolve().parents[1] / "src" / "reflectkg" / "fixtures"

NAMES = {
    # geography
    "m.09c7w0": "United States of America",
    "m.0d060g": "Canada",
    "m.0b90_r": "Mexico",
    "m.01_c9q": "Columbia River",
    "m.0rh6k": "Washington, D.C.",
    "m.05ksh": "Ottawa",
    "m.04sqj": "Mexico City",
    "m.02h40lc": "English Language",
    "m.06nm1": "Spanish Language",
    "m.064_8sq": "French Language",
    "m.04306rv": "German Language",
    "m.02l6h": "Euro",
    "m.0f8l9c": "France",
    "m.0345h": "Germany",
    "m.06mkj": "Spain",
    "m.06mzp": "Switzerland",
    "m.05qtj": "Paris",
    "m.0156q": "Berlin",
    "m.056_y": "Madrid",
    "m.02llzg": "Central European Time",
    "m.02j9z": "Eiffel Tower",
    "m.04gdr": "Louvre",
    "m.01qbr": "Brandenburg Gate",
    "m.0h8z5": "Rhine",
    "m.059g4": "North Sea",
    "m.0blbxk": "Mount Everest",
    "m.016zwt": "Nepal",
    "m.0d05w3": "China",
    # organizations and people
    "m.051cc": "Martin Luther King, Jr.",
    "m.0dl6qm": "Montgomery Improvement Association",
    "m.0fthf": "Southern Christian Leadership Conference",
    "m.013yq": "Atlanta",
    "m.02r8hh": "Niall Ferguson",
    "m.04hmf4": "Ayaan Hirsi Ali",
    "m.0tfer1": "Thomas Ferguson",
    "m.0sdoug": "Susan Douglas",
    "m.05zppz": "Male",
    "m.06q1r": "Scotland",
    "m.07ssc": "United Kingdom",
    "m.04ztj": "Marriage",
    "m.01s8p": "Marc Chagall",
    "m.0c_modart": "Modern art",
    "m.0c_cubism": "Cubism",
    "m.0c_surreal": "Surrealism",
    "m.0c_express": "Expressionism",
    "m.0c_fauvism": "Fauvism",
    "m.05qdh": "Painting",
    "m.0c_amwin": "America Windows",
    "m.0c_birth": "Birth",
    "m.0c_calvary": "Calvary",
    "m.0c_liozna": "Liozna",
    "m.0c_belarus": "Belarus",
    "m.0c_vispt": "Visual Artist",
    "m.0c_spdv": "Saint-Paul-de-Vence",
    "m.0c_mylife": "My Life",
    "m.0c_painter": "Painter",
    "m.0jnpc": "Florida Panthers",
    "m.02_miar": "Miami Arena",
    "m.0bbtc": "BB&T Center",
    "m.0r04p": "Sunrise",
    "m.02_eastc": "Eastern Conference",
    "m.02_atld": "Atlantic Division",
    "m.0jcx": "Albert Einstein",
    "m.07_u6": "Ulm",
    "m.05wkw": "Physicist",
    "m.0ccvx": "Princeton",
    "m.0661ql3": "Inception",
    "m.04q_0t": "Christopher Nolan",
    "m.0d_emth": "Emma Thomas",
    "m.0dvmd": "Leonardo DiCaprio",
    "m.06n90": "Science Fiction",
    "m.02_dquix": "Don Quixote",
    "m.01_cerv": "Miguel de Cervantes",
    "m.05hgj": "Novel",
    "m.0_sancho": "Sancho Panza",
    "m.04sv4": "Microsoft",
    "m.017nt": "Bill Gates",
    "m.0dmq8": "Paul Allen",
    "m.0fvzg": "Redmond",
    "m.01mf0": "Software",
    "m.0_prpr": "Pride and Prejudice",
    "m.0fs_jau": "Jane Austen",
}

TRIPLES = """
m.09c7w0 location.location.adjoins m.0d060g
m.09c7w0 location.location.adjoins m.0b90_r
m.09c7w0 location.location.contains m.01_c9q
m.09c7w0 location.country.capital m.0rh6k
m.09c7w0 location.country.official_language m.02h40lc
m.01_c9q geography.river.flow_through m.0d060g
m.01_c9q geography.river.flow_through m.09c7w0
m.0d060g location.country.capital m.05ksh
m.0d060g location.country.official_language m.02h40lc
m.0b90_r location.country.capital m.04sqj
m.0b90_r location.country.official_language m.06nm1
m.0b90_r location.location.adjoins m.09c7w0
m.051cc organization.organization_founder.organizations_founded m.0dl6qm
m.051cc organization.organization_founder.organizations_founded m.0fthf
m.051cc religion.religious_organization.leaders m.0c_mlkl1
m.051cc organization.organization.founders m.0c_mlkf1
m.051cc organization.organization.leadership m.0c_mlkp1
m.051cc organization.leadership.organization m.0c_mlko1
m.0fthf organization.organization.headquarters m.013yq
m.02r8hh people.person.spouse_s m.0j4jq57
m.02r8hh people.person.children m.0tfer1
m.02r8hh people.person.gender m.05zppz
m.02r8hh people.person.nationality m.06q1r
m.02r8hh people.person.nationality m.07ssc
m.0j4jq57 people.marriage.spouse m.02r8hh
m.0j4jq57 people.marriage.spouse m.04hmf4
m.0j4jq57 people.marriage.type_of_union m.04ztj
m.0tfer1 people.person.parents m.04hmf4
m.0tfer1 people.person.parents m.02r8hh
m.0tfer1 people.person.gender m.05zppz
m.04ztj people.marriage.type_of_union m.0j4jt43
m.0j4jt43 people.marriage.spouse m.0sdoug
m.0j4jt43 people.marriage.spouse m.02r8hh
m.01s8p visual_art.visual_artist.associated_periods_or_movements m.0c_modart
m.01s8p visual_art.visual_artist.associated_periods_or_movements m.0c_cubism
m.01s8p visual_art.visual_artist.associated_periods_or_movements m.0c_surreal
m.01s8p visual_art.visual_artist.associated_periods_or_movements m.0c_express
m.01s8p visual_art.visual_artist.associated_periods_or_movements m.0c_fauvism
m.01s8p visual_art.visual_artist.art_forms m.05qdh
m.01s8p visual_art.visual_artist.artworks m.0c_amwin
m.01s8p visual_art.visual_artist.artworks m.0c_birth
m.01s8p visual_art.visual_artist.artworks m.0c_calvary
m.01s8p people.person.place_of_birth m.0c_liozna
m.01s8p people.person.nationality m.0f8l9c
m.01s8p people.person.nationality m.0c_belarus
m.01s8p people.person.profession m.0c_painter
m.01s8p common.topic.notable_types m.0c_vispt
m.01s8p people.deceased_person.place_of_death m.0c_spdv
m.01s8p book.author.works_written m.0c_mylife
m.0jnpc sports.sports_team.arena_stadium m.02_miar
m.0jnpc sports.sports_team.arena_stadium m.0bbtc
m.0jnpc sports.sports_team.location m.0r04p
m.0jnpc sports.sports_team.venue m.0c_venue1
m.0jnpc sports.sports_team.venue m.0c_venue2
m.0jnpc ice_hockey.hockey_team.conference m.02_eastc
m.0jnpc ice_hockey.hockey_team.division m.02_atld
m.0c_venue1 sports.team_venue_relationship.venue m.02_miar
m.0c_venue1 sports.team_venue_relationship.team m.0jnpc
m.0c_venue2 sports.team_venue_relationship.venue m.0bbtc
m.0c_venue2 sports.team_venue_relationship.team m.0jnpc
m.0r04p sports.sports_team_location.teams m.0jnpc
m.0f8l9c location.country.capital m.05qtj
m.0f8l9c location.location.contains m.05qtj
m.0f8l9c location.country.official_language m.064_8sq
m.0f8l9c location.country.currency_used m.02l6h
m.0f8l9c location.location.adjoins m.0345h
m.0f8l9c location.location.adjoins m.06mkj
m.0345h location.country.capital m.0156q
m.0345h location.country.official_language m.04306rv
m.0345h location.country.currency_used m.02l6h
m.0345h location.location.adjoins m.0f8l9c
m.06mkj location.country.capital m.056_y
m.06mkj location.country.official_language m.06nm1
m.06mkj location.country.currency_used m.02l6h
m.05qtj location.location.containedby m.0f8l9c
m.05qtj location.location.time_zones m.02llzg
m.05qtj travel.travel_destination.tourist_attractions m.02j9z
m.05qtj travel.travel_destination.tourist_attractions m.04gdr
m.0156q location.location.containedby m.0345h
m.0156q location.location.time_zones m.02llzg
m.0156q location.location.contains m.01qbr
m.0h8z5 geography.river.basin_countries m.06mzp
m.0h8z5 geography.river.basin_countries m.0345h
m.0h8z5 geography.river.basin_countries m.0f8l9c
m.0h8z5 geography.river.mouth m.059g4
m.0h8z5 geography.river.length lit:1233
m.0blbxk geography.mountain.elevation lit:8848
m.0blbxk location.location.containedby m.016zwt
m.0blbxk location.location.containedby m.0d05w3
m.0jcx people.person.place_of_birth m.07_u6
m.0jcx people.person.nationality m.0345h
m.0jcx people.person.profession m.05wkw
m.0jcx people.deceased_person.place_of_death m.0ccvx
m.0661ql3 film.film.directed_by m.04q_0t
m.0661ql3 film.film.starring m.0dvmd
m.0661ql3 film.film.genre m.06n90
m.04q_0t people.person.spouse m.0d_emth
m.04q_0t people.person.nationality m.07ssc
m.0dvmd people.person.nationality m.09c7w0
m.02_dquix book.written_work.author m.01_cerv
m.02_dquix book.book.genre m.05hgj
m.02_dquix book.book.characters m.0_sancho
m.01_cerv people.person.languages m.06nm1
m.01_cerv people.person.nationality m.06mkj
m.04sv4 organization.organization.founders m.017nt
m.04sv4 organization.organization.founders m.0dmq8
m.04sv4 organization.organization.headquarters m.0fvzg
m.04sv4 business.business_operation.industry m.01mf0
m.017nt organization.organization_founder.organizations_founded m.04sv4
m.017nt people.person.nationality m.09c7w0
m.0_prpr book.written_work.author m.0fs_jau
m.0_prpr book.book.genre m.05hgj
"""

CATCH_ALL_RELEVANCE = {"Fully Relevant": -2.0, "Partially Relevant": -1.0, "Unrelevant": -1.5}


@dataclass
class Hop:
    relation: str
    keep: list[str]
    relevance: dict[str, str] = field(default_factory=dict)  # node -> token, default Fully
    rationality: str = "Fully Reasonable"


@dataclass
class Question:
    id: str
    question: str
    topics: list[str]
    answers: list[str]
    route: list[Hop]
    utility: int = 5
    traps: list[str] = field(default_factory=list)


QUESTIONS = [
    Question("border", "which countries border the us", ["m.09c7w0"], ["m.0d060g", "m.0b90_r"],
             [Hop("location.location.adjoins", ["m.0d060g", "m.0b90_r"])]),
    Question("mlk", "what organization did martin luther king lead", ["m.051cc"], ["m.0fthf", "m.0dl6qm"],
             [Hop("organization.organization_founder.organizations_founded", ["m.0dl6qm", "m.0fthf"],
                  rationality="Partially Reasonable")]),
    Question("ferguson", "who is niall ferguson's wife", ["m.02r8hh", "m.04ztj"], ["m.04hmf4"],
             [Hop("people.person.spouse_s", ["m.0j4jq57"], rationality="Partially Reasonable"),
              Hop("people.marriage.spouse", ["m.04hmf4"])]),
    Question("chagall", "what type of art does marc chagall do", ["m.01s8p"],
             ["m.0c_modart", "m.0c_cubism", "m.0c_surreal", "m.0c_express", "m.0c_fauvism"],
             [Hop("visual_art.visual_artist.associated_periods_or_movements",
                  ["m.0c_modart", "m.0c_cubism", "m.0c_surreal", "m.0c_express", "m.0c_fauvism"],
                  {n: "Partially Relevant" for n in ["m.0c_cubism", "m.0c_surreal", "m.0c_express",
                                                     "m.0c_fauvism"]})],
             utility=3),
    Question("panthers", "where do florida panthers play", ["m.0jnpc"], ["m.0bbtc"],
             [Hop("sports.sports_team.arena_stadium", ["m.02_miar", "m.0bbtc"],
                  {"m.02_miar": "Partially Relevant"})],
             utility=4),
    Question("france-capital", "what is the capital of france", ["m.0f8l9c"], ["m.05qtj"],
             [Hop("location.country.capital", ["m.05qtj"])]),
    Question("germany-capital", "what is the capital city of germany", ["m.0345h"], ["Berlin"],
             [Hop("location.country.capital", ["m.0156q"])]),
    Question("spain-currency", "what currency does spain use", ["m.06mkj"], ["m.02l6h"],
             [Hop("location.country.currency_used", ["m.02l6h"])]),
    Question("mexico-language", "what language do they speak in mexico", ["m.0b90_r"], ["m.06nm1"],
             [Hop("location.country.official_language", ["m.06nm1"])]),
    Question("einstein-birth", "where was albert einstein born", ["m.0jcx"], ["m.07_u6"],
             [Hop("people.person.place_of_birth", ["m.07_u6"])]),
    Question("inception-director", "who directed inception", ["m.0661ql3"], ["m.04q_0t"],
             [Hop("film.film.directed_by", ["m.04q_0t"])]),
    Question("rhine-countries", "which countries does the rhine flow through", ["m.0h8z5"],
             ["m.06mzp", "m.0345h", "m.0f8l9c"],
             [Hop("geography.river.basin_countries", ["m.06mzp", "m.0345h", "m.0f8l9c"])], utility=4),
    Question("paris-currency", "what currency is used in the country where paris is", ["m.05qtj"], ["m.02l6h"],
             [Hop("location.location.containedby", ["m.0f8l9c"], rationality="Partially Reasonable"),
              Hop("location.country.currency_used", ["m.02l6h"])],
             traps=["travel.travel_destination.tourist_attractions"]),
    Question("inception-spouse", "who is the wife of the director of inception", ["m.0661ql3"], ["m.0d_emth"],
             [Hop("film.film.directed_by", ["m.04q_0t"], rationality="Partially Reasonable"),
              Hop("people.person.spouse", ["m.0d_emth"])],
             traps=["film.film.starring"]),
    Question("berlin-language", "what language is spoken in the country whose capital is berlin", ["m.0156q"],
             ["German Language"],
             [Hop("location.location.containedby", ["m.0345h"], rationality="Partially Reasonable"),
              Hop("location.country.official_language", ["m.04306rv"])],
             traps=["location.location.contains"]),
    Question("quixote-language", "what language did the author of don quixote write in", ["m.02_dquix"],
             ["m.06nm1"],
             [Hop("book.written_work.author", ["m.01_cerv"], rationality="Partially Reasonable"),
              Hop("people.person.languages", ["m.06nm1"])],
             traps=["book.book.characters", "book.book.genre"]),
    Question("microsoft-founders", "who founded microsoft", ["m.04sv4"], ["m.017nt", "m.0dmq8"],
             [Hop("organization.organization.founders", ["m.017nt", "m.0dmq8"])]),
    Question("gates-hq", "where is the headquarters of the company bill gates founded", ["m.017nt"], ["m.0fvzg"],
             [Hop("organization.organization_founder.organizations_founded", ["m.04sv4"]),
              Hop("organization.organization.headquarters", ["m.0fvzg"])]),
    Question("everest-height", "how tall is mount everest", ["m.0blbxk"], ["lit:8848"],
             [Hop("geography.mountain.elevation", ["lit:8848"])]),
    Question("pride-author", "who wrote pride and prejudice", ["m.0_prpr"], ["Jane Austen"],
             [Hop("book.written_work.author", ["m.0fs_jau"])]),
]

# Forge-only fixtures: critic verdicts that reproduce the published MLK sample
# and a question whose first hop the critic rejects.
EARLY_STOP = {"id": "early-stop", "question": "who was niall ferguson first married to",
              "topics": ["m.04ztj"], "answers": ["m.0sdoug"]}


def build_graph() -> KnowledgeGraph:
    triples = []
    for line in TRIPLES.strip().splitlines():
        s, r, o = line.split()
        triples.append(Triple(parse_node(s), RelationRef.parse(r), parse_node(o)))
    return KnowledgeGraph(triples, NAMES)


def _rule(task, query, path="*", candidate="*", **kw):
    rule = {"task": task, "query": query, "path": path, "candidate": candidate}
    rule.update(kw)
    return rule


def route_rules(q: Question, g: KnowledgeGraph) -> list[dict]:
    rules = []
    topic = q.topics[0]
    trail = topic
    seen = {topic}
    source = g.entity(topic)
    for d, hop in enumerate(q.route):
        hypos = [hop.relation] + (q.traps if d == 0 else [])
        rules.append(_rule("hypotheses", q.question, trail, hypotheses=hypos))
        rules.append(_rule("relevance", q.question, trail, hop.relation, token="Fully Relevant"))
        rel = RelationRef.parse(hop.relation)
        tails = sorted((t.key for t in g.tail_entities(source, rel)), key=str)
        tails = [t for t in tails if t not in seen]
        assert set(hop.keep) <= set(tails), (q.id, hop.relation, hop.keep, tails)
        for t in tails:
            token = hop.relevance.get(t, "Fully Relevant") if t in hop.keep else "Unrelevant"
            rules.append(_rule("relevance", q.question, f"{trail} > {hop.relation}", t, token=token))
        trail = f"{trail} > {hop.relation} > {'|'.join(sorted(hop.keep))}"
        rules.append(_rule("rationality", q.question, trail, token=hop.rationality))
        seen.update(hop.keep)
        if len(hop.keep) == 1:
            source = parse_node(hop.keep[0])
    rules.append(_rule("retrieval", q.question, trail, token="No Retrieval"))
    rules.append(_rule("utility", q.question, trail, "|".join(sorted(q.route[-1].keep)),
                       token=f"Utility:{q.utility}"))
    for trap in q.traps:
        rules.append(_rule("relevance", q.question, topic, trap, token="Fully Relevant"))
        rules.append(_rule("relevance", q.question, f"{topic} > {trap}", token="Fully Relevant"))
        rules.append(_rule("rationality", q.question, f"{topic} > {trap} > *", token="Fully Reasonable"))
        rules.append(_rule("relevance", q.question, f"{topic} > {trap} > *", token="Unrelevant"))
    return rules


def mock_rules(g: KnowledgeGraph) -> list[dict]:
    rules = []
    for q in QUESTIONS:
        rules.extend(route_rules(q, g))
    ferg = next(q for q in QUESTIONS if q.id == "ferguson").question
    marriage_branch = "m.04ztj > people.marriage.type_of_union > *"
    rules.append(_rule("rationality", ferg, marriage_branch, token="Unreasonable"))

    mlk = next(q for q in QUESTIONS if q.id == "mlk").question
    rules += [
        _rule("retrieval", mlk, "m.051cc", token="Relation Retrieval"),
        _rule("relevance", mlk, "m.051cc", "organization.organization.founders", token="Unrelevant"),
        _rule("critic_relevance", mlk, candidate="organization.organization_founder.organizations_founded",
              kind="relation", token="Fully Relevant"),
        _rule("critic_relevance", mlk, candidate="organization.organization.founders", kind="relation",
              token="Unrelevant"),
        _rule("critic_relevance", mlk, kind="entity", token="Fully Relevant"),
        _rule("critic_utility", mlk, token="Utility:5"),
        _rule("critic_rationality", EARLY_STOP["question"], marriage_branch, token="Unreasonable"),
    ]
    rules.append(_rule("relevance", "*", logprobs=CATCH_ALL_RELEVANCE))
    return rules


def mlk_embeddings(g: KnowledgeGraph) -> dict:
    """Unit vectors whose cosine to the query fixes the candidate order of the published sample."""
    query = next(q for q in QUESTIONS if q.id == "mlk").question
    cos = {
        "religion.religious_organization.leaders": 0.8,
        "organization.organization.founders": 0.7,
        "organization.organization.leadership": 0.6,
        "organization.leadership.organization": 0.5,
    }
    vectors = {query: [1.0, 0.0, 0.0, 0.0],
               "organization.organization_founder.organizations_founded": [0.0, 0.0, 1.0, 0.0]}
    for rel, c in cos.items():
        vectors[rel] = [c, math.sqrt(1.0 - c * c), 0.0, 0.0]
    rels = {r.dotted for r in g.out_relations(g.entity("m.051cc"))}
    assert rels == set(vectors) - {query}, rels
    return {"vectors": vectors}


def main() -> None:
    g = build_graph()
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "desk.tsv", "w", encoding="utf-8") as fh:
        fh.write("# desk-scale knowledge graph: subject<TAB>relation<TAB>object\n")
        for line in TRIPLES.strip().splitlines():
            fh.write("\t".join(line.split()) + "\n")
    with open(OUT / "desk.names.tsv", "w", encoding="utf-8") as fh:
        for mid, name in sorted(NAMES.items()):
            fh.write(f"{mid}\t{name}\n")
    with open(OUT / "desk_questions.jsonl", "w", encoding="utf-8") as fh:
        for q in QUESTIONS:
            fh.write(json.dumps({"id": q.id, "question": q.question, "topics": q.topics,
                                 "answers": q.answers}) + "\n")
    with open(OUT / "early_stop.jsonl", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(EARLY_STOP) + "\n")
    with open(OUT / "desk_mock.json", "w", encoding="utf-8") as fh:
        json.dump({"rules": mock_rules(g)}, fh, indent=1)
        fh.write("\n")
    with open(OUT / "mlk_embeddings.json", "w", encoding="utf-8") as fh:
        json.dump(mlk_embeddings(g), fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main()
