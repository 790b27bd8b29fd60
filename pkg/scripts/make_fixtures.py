"""Regenerate the bundled fixtures under src/rgmem/data/.

    python3 scripts/make_fixtures.py

The outputs are committed; tests read the files, they never call this script.
"""

from __future__ import annotations

import json
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "rgmem" / "data"

# Two speakers per conversation, turns alternate starting with the profiled user.
C1_S1 = [
    "Morning! I love hiking and went up Eagle Ridge trail on Saturday.",
    "Eagle Ridge sounds steep. How long did it take?",
    "About four hours. I always pack lemon cake for the summit.",
    "Lemon cake on a summit is a great tradition.",
    "My sister Hana joined me, she hates early starts though.",
    "Ha, was she grumpy the whole way?",
    "Only until the coffee kicked in. I like a flat white before any hike.",
    "Flat white is the only acceptable coffee.",
    "Work has been busy, my job at the library is moving to a new building.",
    "Moving a whole library must be chaos.",
    "I love hiking on weekends to recover from the boxes of books.",
    "Do you hike anywhere besides Eagle Ridge?",
    "Sometimes Cedar Falls, the hiking loop there is shorter.",
    "Cedar Falls has that lovely waterfall.",
    "I always stop at the waterfall to take photos with my old camera.",
    "Still using the film camera?",
    "Yes, a Pentax from my grandfather. My running has slipped though.",
    "Running is hard when work piles up.",
    "I signed up for a marathon in Kyoto next spring anyway.",
    "A marathon in Japan! That is ambitious.",
    "The trip to Japan is mostly for the hiking around Kyoto.",
    "Which hike near Kyoto?",
    "The Kumano Kodo trail, I love hiking old pilgrim routes.",
    "That is a beautiful route.",
    "My dog Biscuit will stay with Hana during the trip.",
    "Biscuit will be spoiled.",
    "Totally. I prefer hiking with Biscuit but flights are hard for dogs.",
    "Makes sense.",
    "Anyway, the budget for the trip is tight, I am saving every month.",
    "Good luck with the savings plan.",
]
C1_S2 = [
    "Update: I got a promotion, I now lead the library archive team.",
    "Congratulations on the promotion!",
    "Thanks! To celebrate I went hiking at Eagle Ridge again.",
    "Eagle Ridge twice in a month, nice.",
    "This time I always kept a slow pace because of my knee.",
    "Is the knee okay?",
    "The physio said yoga would help, so I started yoga on Tuesdays.",
    "Yoga on Tuesdays sounds relaxing.",
    "I love hiking more than yoga but the knee needs it.",
    "Balance is good.",
    "Hana baked a carrot cake for the promotion party.",
    "Carrot cake is underrated.",
    "We also did a cooking night, I made mushroom risotto.",
    "Risotto takes patience.",
    "I like cooking slowly with music on.",
    "What music?",
    "Mostly jazz records, my guitar lessons stopped though.",
    "Why did the guitar lessons stop?",
    "The teacher moved to Lisbon, so no more guitar for now.",
    "Too bad.",
    "For the Japan trip I booked a ryokan near the Kumano Kodo hiking trail.",
    "A ryokan will be special.",
    "The trip is in April, and I love hiking in spring weather.",
    "Spring in Japan, perfect.",
    "My savings finally reached the trip budget this week.",
    "All that saving paid off.",
    "Biscuit got a new harness for our weekend hiking too.",
    "Biscuit the hiking dog.",
    "Next weekend I want to try hiking the Cedar Falls loop at sunrise.",
    "Sunrise at the falls will be lovely.",
]
C2_S1 = [
    "I love cooking and last night I made a green curry with tofu.",
    "Green curry with tofu sounds great.",
    "I always buy the curry paste from the Thai market on Fifth Street.",
    "The Thai market on Fifth is good.",
    "I never use bottled sauces, cooking from scratch is my thing.",
    "Respect for cooking from scratch.",
    "My job at the bakery starts at five, so cooking dinner relaxes me.",
    "Five in the morning is brutal.",
    "The bakery job pays okay and I like the sourdough team.",
    "Sourdough is an art.",
    "I love cooking on Sundays for my friends from the climbing gym.",
    "How many friends come over?",
    "Usually six friends, we do a big pasta night.",
    "Pasta night sounds fun.",
    "I prefer fresh pasta, I roll it by hand with a wooden pin.",
    "Hand rolled pasta is impressive.",
    "My climbing has improved, I finished a blue route at the gym.",
    "A blue route, nice progress.",
    "I always stretch after climbing or my shoulders ache.",
    "Stretching matters.",
    "Stress at work has been high since the oven broke.",
    "A broken oven at a bakery is a disaster.",
    "I love cooking but the broken oven made me hate Mondays.",
    "Understandable.",
    "My cat Pepper steals basil from the kitchen counter.",
    "Pepper the basil thief.",
    "For travel I want to visit Paris to take a pastry class.",
    "A pastry class in Paris would suit you.",
    "The budget for Paris is the hard part.",
    "Start saving now.",
]
C2_S2 = [
    "Big news, the bakery gave me a promotion to head baker.",
    "Head baker, well deserved.",
    "I celebrated by cooking a lemon tart for the whole team.",
    "Lemon tart for the team, nice.",
    "I always use Meyer lemons for tarts.",
    "Meyer lemons are sweeter.",
    "I love cooking desserts now that the new oven arrived.",
    "The new oven must help.",
    "Therapy has helped with the stress from the oven saga too.",
    "Glad therapy is helping.",
    "My friends from climbing came for another pasta night.",
    "Another pasta night, classic.",
    "This time I made pumpkin ravioli, cooking it took three hours.",
    "Three hours of ravioli.",
    "I like cooking with seasonal squash in autumn.",
    "Autumn squash is the best.",
    "Pepper knocked a jar of saffron off the shelf.",
    "Pepper strikes again.",
    "I started saving for Paris with a separate savings account.",
    "A savings account just for Paris, smart.",
    "The pastry class in Paris is booked for October.",
    "October in Paris will be lovely.",
    "I never skip my climbing sessions on Thursdays now.",
    "Thursday climbing, good habit.",
    "I love cooking for my sister Ines when she visits.",
    "What does Ines like?",
    "Ines prefers spicy food, so cooking her a green curry is easy.",
    "Green curry again.",
    "Next I want to learn cooking croissants before the Paris class.",
    "Croissants are a challenge.",
]


def session(sid, date, speakers, utterances):
    return {
        "session_id": sid,
        "date_time": date,
        "turns": [{"speaker": speakers[i % 2], "text": u} for i, u in enumerate(utterances)],
    }


MICRO = {
    "conversations": [
        {
            "conversation_id": "c1",
            "sessions": [
                session("c1-s1", "2023-05-06", ("Maya", "Leo"), C1_S1),
                session("c1-s2", "2023-06-10", ("Maya", "Leo"), C1_S2),
            ],
        },
        {
            "conversation_id": "c2",
            "sessions": [
                session("c2-s1", "2023-09-02", ("Sam", "Kit"), C2_S1),
                session("c2-s2", "2023-10-14", ("Sam", "Kit"), C2_S2),
            ],
        },
    ],
    "qa": [
        {"conversation_id": "c1", "category": "single_hop", "question": "What trail did Maya go up on Saturday?", "answer": "Eagle Ridge"},
        {"conversation_id": "c1", "category": "single_hop", "question": "What is the name of Maya's dog?", "answer": "Biscuit"},
        {"conversation_id": "c1", "category": "multi_hop", "question": "Which pilgrim route will Maya hike on the Japan trip?", "answer": "Kumano Kodo"},
        {"conversation_id": "c1", "category": "temporal", "question": "When is Maya's trip to Japan?", "answer": "April"},
        {"conversation_id": "c1", "category": "open_domain", "question": "What does Maya love doing on weekends?", "answer": "hiking"},
        {"conversation_id": "c1", "category": "adversarial", "question": "What did Maya say about her guitar teacher in Kyoto?", "answer": "not mentioned"},
        {"conversation_id": "c2", "category": "single_hop", "question": "Where does Sam buy curry paste?", "answer": "Thai market"},
        {"conversation_id": "c2", "category": "single_hop", "question": "What is the name of Sam's cat?", "answer": "Pepper"},
        {"conversation_id": "c2", "category": "multi_hop", "question": "What class will Sam take in Paris?", "answer": "pastry class"},
        {"conversation_id": "c2", "category": "temporal", "question": "When is the pastry class in Paris booked?", "answer": "October"},
        {"conversation_id": "c2", "category": "open_domain", "question": "What hobby does Sam love most?", "answer": "cooking"},
        {"conversation_id": "c2", "category": "adversarial", "question": "Which marathon did Sam run in Paris?", "answer": "not mentioned"},
    ],
}

# 25-turn single session used by the CLI/service end-to-end tests
SESSION25 = [
    ("user", "I love hiking in the hills behind my house."),
    ("assistant", "The hills sound lovely. How often do you go?"),
    ("user", "I always go hiking on Sunday mornings."),
    ("assistant", "A Sunday routine is nice."),
    ("user", "My sister prefers yoga over hiking."),
    ("assistant", "Does she do yoga at home?"),
    ("user", "Yes, and I like joining her yoga class on Wednesdays."),
    ("assistant", "Yoga and hiking complement each other."),
    ("user", "Work at the startup has been stressful lately."),
    ("assistant", "Startups can be intense."),
    ("user", "I love hiking because it clears the stress of work."),
    ("assistant", "That makes sense."),
    ("user", "I never drink coffee after noon or I cannot sleep."),
    ("assistant", "Good rule."),
    ("user", "For the trip to Japan I want to go hiking near Nikko."),
    ("assistant", "Nikko has great trails."),
    ("user", "I prefer hiking in autumn when the maples turn red."),
    ("assistant", "Autumn colours in Nikko are famous."),
    ("user", "My budget for Japan is about two thousand dollars."),
    ("assistant", "That is workable if you plan ahead."),
    ("user", "I always cook pasta the night before a long hiking day."),
    ("assistant", "Carbs before a hike, classic."),
    ("user", "My dog Miso loves hiking as much as I do."),
    ("assistant", "Miso sounds like a great trail companion."),
    ("user", "Next month I want to try hiking with a heavier pack."),
]


def session25_jsonl() -> str:
    lines = []
    for i, (speaker, text) in enumerate(SESSION25):
        rec = {"session_id": "fixture-25", "turn_index": i, "speaker": speaker, "text": text, "timestamp": "2024-03-02"}
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + "\n"


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "micro_locomo.json").write_text(json.dumps(MICRO, indent=1) + "\n", encoding="utf-8")
    (DATA / "session25.jsonl").write_text(session25_jsonl(), encoding="utf-8")
    print(f"wrote fixtures to {DATA}")


if __name__ == "__main__":
    main()
