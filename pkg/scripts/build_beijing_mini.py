"""Regenerate the shipped beijing-mini fixture bundle.

Transit options are synthetic: road distance is 1.3x the great-circle
distance, and each mode has a fixed speed, overhead and fare schedule.
Run from the repository root: ``python3 scripts/build_beijing_mini.py``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

from travelsim.core import GeoPoint
from travelsim.spatial import haversine

OUT = Path(__file__).resolve().parents[1] / "src/travelsim/data/beijing-mini"
CITY = "Beijing"

POIS = [
    ("bj-west", "Beijing West Railway Station", 39.8946, 116.3214, "station"),
    ("hotel-shichahai", "Hotel near Shichahai", 39.9380, 116.3960, "hotel"),
    ("quanjude-qianmen", "Quanjude Roast Duck Qianmen", 39.8977, 116.3976, "restaurant"),
    ("siji-minfu", "Siji Minfu", 39.9170, 116.4120, "restaurant"),
    ("shichahai", "Shichahai", 39.9400, 116.3880, "attraction"),
    ("forbidden-city", "Forbidden City", 39.9163, 116.3972, "attraction"),
    ("temple-of-heaven", "Temple of Heaven", 39.8822, 116.4066, "attraction"),
    ("summer-palace", "Summer Palace", 39.9999, 116.2755, "attraction"),
    ("lama-temple", "Lama Temple", 39.9470, 116.4170, "attraction"),
    ("jingshan", "Jingshan Park", 39.9250, 116.3960, "attraction"),
    ("nanluoguxiang", "Nanluoguxiang", 39.9370, 116.4030, "attraction"),
    ("tiananmen", "Tiananmen Square", 39.9055, 116.3976, "attraction"),
]

# (speed km/h, overhead min, description)
MODES = {
    "bus_metro": (30.0, 12, "metro with a short walk at each end"),
    "taxi": (25.0, 5, "taxi door to door"),
    "walking": (4.5, 0, "on foot"),
    "cycling": (12.0, 3, "shared bicycle"),
}


def fare(mode: str, km: float) -> int:
    # minor units (fen); taxi per vehicle, the rest per person
    if mode == "taxi":
        return 1300 + round(max(0.0, km - 3.0) * 230)
    if mode == "bus_metro":
        return 300 + 100 * math.floor(km / 6.0)
    if mode == "cycling":
        return 150
    return 0


def transit_matrix():
    edges = []
    for a in POIS:
        for b in POIS:
            if a[0] == b[0]:
                continue
            km = 1.3 * haversine(GeoPoint(a[2], a[3]), GeoPoint(b[2], b[3]))
            options = []
            for mode, (speed, overhead, desc) in MODES.items():
                options.append(
                    {
                        "mode": mode,
                        "duration_min": overhead + math.ceil(km / speed * 60),
                        "cost": fare(mode, km),
                        "description": f"{desc}, {km:.1f} km",
                    }
                )
            edges.append({"from": a[0], "to": b[0], "options": options})
    return {"schema": "travelsim.transit/1", "edges": edges}


NARRATIVES = {
    "shichahai": ("We strolled along Qianhai and Houhai under the willows, ducked into hutongs lined with grey siheyuan courtyards, and watched rickshaws drift past the lake.", 120, 0),
    "forbidden-city": ("Through the Meridian Gate into vast red-walled courtyards; the Hall of Supreme Harmony and the palace museum galleries took most of the morning.", 150, 6000),
    "temple-of-heaven": ("The blue-tiled Hall of Prayer for Good Harvests rose above the cypress park while elderly locals practised tai chi and sang opera.", 120, 3400),
    "summer-palace": ("A long walk on the painted Long Corridor beside Kunming Lake, then a boat across to the Seventeen-Arch Bridge.", 180, 3000),
    "lama-temple": ("Incense smoke in the halls of the Yonghe Lamasery and the giant sandalwood Maitreya Buddha.", 90, 2500),
    "jingshan": ("A short climb up Jingshan Hill to the Wanchun Pavilion for the view over the golden roofs of the Forbidden City.", 45, 200),
    "nanluoguxiang": ("A lively hutong lane of snack stalls, small shops and courtyard cafes.", 60, 0),
    "tiananmen": ("The wide square with the Monument to the People's Heroes and the Gate of Heavenly Peace to the north.", 45, 0),
}

POSTS = {
    "shichahai": "Shichahai is three connected lakes, Qianhai, Houhai and Xihai. Walk the lakeside in the late afternoon, explore the hutongs and siheyuan courtyards around Yinding Bridge, and take a rickshaw tour if your legs are tired.",
    "forbidden-city": "Book Forbidden City tickets online days ahead, bring your passport, and enter through the Meridian Gate. The central axis halls are crowded; the side palaces and the treasure gallery are quieter. Plan at least three hours and expect a lot of walking.",
    "temple-of-heaven": "Arrive at the Temple of Heaven early in the morning to see locals exercising in the park. Buy the combined ticket for the Hall of Prayer for Good Harvests, the Echo Wall and the Circular Mound Altar.",
    "summer-palace": "The Summer Palace is huge; take the boat across Kunming Lake to save walking, and walk the Long Corridor. Half a day at least.",
    "lama-temple": "The Lama Temple is an active temple; free incense at the gate, no photos inside the halls. Easy to combine with the Confucius Temple nearby.",
    "jingshan": "Jingshan Park is right behind the north gate of the Forbidden City. A short climb gives the best view over the palace roofs, best at sunset.",
    "nanluoguxiang": "Nanluoguxiang is busy and commercial now; the side hutongs are calmer and have nice courtyard cafes.",
    "tiananmen": "Security checks at Tiananmen Square can take time; bring ID. The flag-raising ceremony is at sunrise.",
}

RESTAURANTS = {
    "near": {
        "quanjude-qianmen": [{"name": "Quanjude Roast Duck Qianmen", "cost_estimate": 15000, "quality": 4.3, "duration_min": 80}],
        "siji-minfu": [{"name": "Siji Minfu", "cost_estimate": 12000, "quality": 4.6, "duration_min": 75}],
    },
    "default": [{"name": "Old Beijing noodle house", "cost_estimate": 4000, "quality": 4.0, "duration_min": 45}],
}

PROFILES = {
    "profiles": [
        {
            "id": "elderly-couple",
            "group": [{"gender": "male", "age": 65}, {"gender": "female", "age": 62}],
            "type_label": "couple",
            "preferences": "culture and history, temples, local cuisine, a leisurely pace with plenty of rest",
            "budget": 600000,
            "initial_stamina": 6.5,
            "stamina_rule": "couple",
            "description": "An elderly couple with a passion for culture and history, preferring a leisurely travel pace.",
        }
    ]
}

G = {
    "shichahai": "Walk the lakeside of Qianhai and Houhai in the afternoon, then explore the hutongs and siheyuan courtyards; take a rickshaw if tired.",
    "forbidden-city": "Enter through the Meridian Gate with tickets booked online; follow the central axis halls, then rest in the quieter side palaces.",
    "jingshan": "Climb Jingshan Hill slowly to the Wanchun Pavilion for the view over the palace roofs.",
    "nanluoguxiang": "Browse the hutong lane briefly and sit in a courtyard cafe in the calmer side hutongs.",
    "temple-of-heaven": "Arrive early to see locals exercising in the park; the combined ticket covers the Hall of Prayer for Good Harvests and the Echo Wall.",
    "tiananmen": "Bring ID for the security check and walk across the square to the Gate of Heavenly Peace.",
}


def entry(day, start, location, activity, end=None):
    e = {"day": day, "start_time": start, "location": location, "activity": activity}
    if end:
        e["end_time"] = end
    if activity == "sightsee":
        e["guidance"] = G[location]
    return e


PLAN = {
    "city": CITY,
    "days": 3,
    "hotel": "hotel-shichahai",
    "origin_terminal": "bj-west",
    "traveler_ref": "elderly-couple",
    "entries": [
        entry(1, "10:00", "bj-west", "transit"),
        entry(1, "10:40", "hotel-shichahai", "rest", "11:30"),
        entry(1, "11:30", "hotel-shichahai", "transit"),
        entry(1, "12:00", "quanjude-qianmen", "dine", "13:20"),
        entry(1, "13:20", "quanjude-qianmen", "transit"),
        entry(1, "14:00", "shichahai", "sightsee", "16:00"),
        entry(1, "16:00", "shichahai", "transit"),
        entry(1, "16:20", "hotel-shichahai", "rest", "17:30"),
        entry(1, "17:30", "hotel-shichahai", "transit"),
        entry(1, "18:00", "siji-minfu", "dine", "19:15"),
        entry(1, "19:15", "siji-minfu", "transit"),
        entry(1, "19:45", "hotel-shichahai", "rest"),
        entry(2, "08:30", "hotel-shichahai", "transit"),
        entry(2, "09:00", "forbidden-city", "sightsee", "11:00"),
        entry(2, "11:00", "forbidden-city", "transit"),
        entry(2, "11:15", "jingshan", "sightsee", "12:00"),
        entry(2, "12:00", "jingshan", "transit"),
        entry(2, "12:20", "siji-minfu", "dine", "13:30"),
        entry(2, "13:30", "siji-minfu", "transit"),
        entry(2, "14:00", "hotel-shichahai", "rest", "15:30"),
        entry(2, "15:30", "hotel-shichahai", "transit"),
        entry(2, "15:45", "nanluoguxiang", "sightsee", "16:45"),
        entry(2, "16:45", "nanluoguxiang", "transit"),
        entry(2, "17:00", "hotel-shichahai", "rest", "17:45"),
        entry(2, "17:45", "hotel-shichahai", "transit"),
        entry(2, "18:15", "quanjude-qianmen", "dine", "19:30"),
        entry(2, "19:30", "quanjude-qianmen", "transit"),
        entry(2, "20:00", "hotel-shichahai", "rest"),
        entry(3, "08:30", "hotel-shichahai", "transit"),
        entry(3, "09:00", "temple-of-heaven", "sightsee", "11:00"),
        entry(3, "11:00", "temple-of-heaven", "transit"),
        entry(3, "11:30", "quanjude-qianmen", "dine", "12:45"),
        entry(3, "12:45", "quanjude-qianmen", "transit"),
        entry(3, "13:00", "tiananmen", "sightsee", "13:45"),
        entry(3, "13:45", "tiananmen", "transit"),
        entry(3, "14:10", "hotel-shichahai", "rest", "16:30"),
        entry(3, "16:30", "hotel-shichahai", "transit"),
        entry(3, "17:00", "siji-minfu", "dine", "18:00"),
        entry(3, "18:00", "siji-minfu", "transit"),
        entry(3, "18:40", "bj-west", "rest"),
    ],
}


def transit(dest, mode):
    return {"decision": "transit", "destination": dest, "transport mode": mode}


def react(thought, record):
    return {"reply": thought + "\n" + json.dumps(record, ensure_ascii=False)}


# Follows the case-study walk-through on day 1; later days deviate from the
# plan where an elderly couple plausibly would (late start, skipped visit).
DECISIONS = [
    react(
        "We have just got off a long train ride and feel exhausted. A taxi to the hotel is the most comfortable choice.",
        dict(transit("Hotel near Shichahai", "taxi"), departure="Beijing West Railway Station", **{"arrival time": "10:24", "next planned location": "Hotel near Shichahai"}),
    ),
    react(
        "We are at the hotel. Let us rest for a while before heading out to taste Peking duck.",
        {"decision": "rest", "end time": "11:30", "next planned location": "Quanjude Roast Duck Qianmen"},
    ),
    react("Time for lunch; a taxi keeps us fresh.", transit("Quanjude Roast Duck Qianmen", "taxi")),
    {"decision": "dine", "end time": "13:20", "restaurant": "Quanjude Roast Duck Qianmen"},
    transit("Shichahai", "taxi"),
    {"decision": "sightsee", "end time": "15:30"},
    transit("Hotel near Shichahai", "taxi"),
    {"decision": "rest", "end time": "17:30"},
    transit("Siji Minfu", "taxi"),
    {"decision": "dine"},
    transit("Hotel near Shichahai", "taxi"),
    {"decision": "day_end"},
    {"decision": "rest", "end time": "08:45"},
    transit("Forbidden City", "taxi"),
    {"decision": "sightsee", "end time": "11:15"},
    transit("Jingshan Park", "walking"),
    {"decision": "sightsee", "end time": "12:00"},
    transit("Siji Minfu", "taxi"),
    {"decision": "dine", "end time": "13:30"},
    transit("Hotel near Shichahai", "taxi"),
    react(
        "Our legs are sore after the palace. We will skip Nanluoguxiang and rest until dinner.",
        {"decision": "rest", "end time": "17:30"},
    ),
    transit("Quanjude Roast Duck Qianmen", "taxi"),
    {"decision": "dine", "end time": "19:20"},
    transit("Hotel near Shichahai", "taxi"),
    {"decision": "day_end"},
    transit("Temple of Heaven", "metro"),
    {"decision": "sightsee", "end time": "11:00"},
    transit("Quanjude Roast Duck Qianmen", "taxi"),
    {"decision": "dine", "end time": "12:40"},
    transit("Tiananmen Square", "walking"),
    {"decision": "sightsee", "end time": "13:40"},
    transit("Hotel near Shichahai", "taxi"),
    {"decision": "rest", "end time": "16:30"},
    transit("Siji Minfu", "taxi"),
    {"decision": "dine", "end time": "18:00"},
    transit("Beijing West Railway Station", "taxi"),
    {"decision": "day_end"},
]

ASPECT_SETS = [
    [
        ("Stamina pacing", "Alternate sightseeing with rest at the hotel; keep visits to about two hours for the elderly couple."),
        ("Meal arrangements", "Plan lunch and dinner every day, including Peking duck at Quanjude."),
        ("Spatial grouping", "Group the Forbidden City with Jingshan Park, and Temple of Heaven with Tiananmen Square."),
    ],
    [
        ("Transport comfort", "Prefer taxis; avoid long walks and crowded metro transfers."),
        ("meal arrangements", "Use restaurants close to the day's attractions."),
        ("Arrival and departure", "Start at Beijing West Railway Station on day 1 and return there on day 3."),
    ],
]

BLUEPRINT = [
    ("Arrival and departure", "Anchor day 1 at Beijing West Railway Station and day 3 back at it; middle day starts and ends at the hotel.", [5]),
    ("Spatial grouping", "Using the anchors, group the Forbidden City with Jingshan Park and Temple of Heaven with Tiananmen Square.", [3]),
    ("Stamina pacing and transport", "Given the groups, keep each visit near two hours, rest at the hotel in between, and take taxis.", [1, 4]),
    ("Meal arrangements", "Fit lunch and dinner between the visits, near the grouped attractions, with Peking duck once.", [2]),
]


def aspects_block(items):
    return "```aspects\n" + "\n".join(f"{i}. {t} :: {g}" for i, (t, g) in enumerate(items, 1)) + "\n```"


def chat_responses():
    plan_text = "Here is the final itinerary.\n```json\n" + json.dumps(PLAN, ensure_ascii=False, indent=1) + "\n```"
    blueprint = "```blueprint\n" + "\n".join(
        f"{i}. {t} :: {g} <- {json.dumps(p)}" for i, (t, g, p) in enumerate(BLUEPRINT, 1)
    ) + "\n```"
    responses = {
        "decompose:0": aspects_block(ASPECT_SETS[0]),
        "decompose:1": aspects_block(ASPECT_SETS[1]),
        "decompose:*": aspects_block(ASPECT_SETS[0]),
        "route": blueprint,
        "maop:final": plan_text,
        "maop:final:retry": plan_text,
        "naive:synthesis": plan_text,
        "naive:synthesis:retry": plan_text,
        "long:plan": plan_text,
        "long:plan:retry": plan_text,
    }
    for i, (title, _, _) in enumerate(BLUEPRINT, 1):
        responses[f"maop:aspect:{i}"] = f"Analysis of {title.lower()}: settled; the conclusions carry into the next aspect."
    responses["maop:aspect:*"] = "Analysis noted."
    responses["naive:aspect:*"] = "Independent analysis of this aspect: feasible within the couple's stamina."
    return {"schema": "travelsim.chat/1", "responses": responses}


EVALUATOR = {
    "schema": "travelsim.evaluator/1",
    "default": 70.0,
    "by_granularity": {
        "per_poi": {"ex": 82, "it": 85, "ar": 78, "st": 72, "co": 80},
        "per_day": {"ex": 78, "it": 80, "ar": 76, "st": 70, "co": 82},
        "per_trip": {"ex": 80, "it": 84, "ar": 77, "st": 74, "co": 79},
    },
    "by_poi": {"forbidden-city": {"ex": 88, "it": 92, "ar": 75, "st": 62, "co": 78}},
}


def write(name, obj):
    with open(OUT / name, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=1, sort_keys=False)
        fh.write("\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write("manifest.json", {"schema": "travelsim.bundle/1", "name": "beijing-mini", "city": CITY, "currency": "CNY fen", "hotel": "hotel-shichahai", "origin_terminal": "bj-west", "days": 3})
    write("pois.json", [{"id": i, "name": n, "lat": la, "lon": lo, "category": c} for i, n, la, lo, c in POIS])
    write("transit.json", transit_matrix())
    write("restaurants.json", {"schema": "travelsim.restaurants/1", **RESTAURANTS})
    write("narratives.json", {k: {"narrative": n, "suggested_duration_min": d, "cost": c} for k, (n, d, c) in NARRATIVES.items()})
    write("posts.json", POSTS)
    write("profiles.json", PROFILES)
    write("plan.json", PLAN)
    write("decisions.json", {"schema": "travelsim.decisions/1", "decisions": DECISIONS})
    write("chat.json", chat_responses())
    write("evaluator.json", EVALUATOR)
    write("aspects.json", {"aspects": [{"aspect": t, "guidance": g} for s in ASPECT_SETS for t, g in s if t != "meal arrangements"]})


if __name__ == "__main__":
    main()
