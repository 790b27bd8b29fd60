"""Feed contradicting evidence into one profile category and watch its regime tag.

Prints one line per arriving unit: how many contradictions are pending, whether the
node synthesis fired, and the resulting summary.
"""

import argparse

from rgmem.backend import MockBackend, regime_tag
from rgmem.evolution import EvolutionConfig, process_new_units
from rgmem.extraction import ExtractionProposal, apply_proposal
from rgmem.hashing import fnv16
from rgmem.store import ABSTRACT, ConclusionItem, EpisodicUnit, MemoryStore

CATEGORY = "Hobbies & Interests"


def unit(uid: str, text: str) -> EpisodicUnit:
    return EpisodicUnit(
        uid, "demo", (0, 0), ["user"], f"fact {uid}",
        [ConclusionItem(f"{uid}:b0", text, "base", uid)],
        [ConclusionItem(f"{uid}:r0", f"user: {text}", "rel", uid)],
        0, fnv16(uid),
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--positives", type=int, default=6)
    ap.add_argument("--negatives", type=int, default=8)
    ap.add_argument("--theta-sum", type=int, default=6)
    args = ap.parse_args()

    cfg = EvolutionConfig(theta_inf=min(3, args.theta_sum), theta_sum=args.theta_sum)
    store, backend = MemoryStore(), MockBackend()
    apply_proposal(store, ExtractionProposal(
        instance_entities=[("user:self", ""), ("walk@demo", "")],
        general_links=[("walk@demo", "walking")],
        abstract_links=[("walking", CATEGORY)],
    ))
    node = store.find_node(CATEGORY, ABSTRACT)
    stream = [("I love walking", "+")] * args.positives + [("I hate walking", "-")] * args.negatives
    for k, (text, _) in enumerate(stream):
        u = unit(f"u{k:03d}", text)
        store.add_episodic_unit(u)
        apply_proposal(store, ExtractionProposal(event_relations=[("user:self", "walk@demo", "engages_in", u.id)]))
        report = process_new_units(store, [u.id], backend, cfg)
        theory = store.nodes[node].theory
        fired = "fired" if report.rk2_fired else "     "
        print(f"{k + 1:3d} {text:16s} pending={store.nodes[node].pending_count:2d} {fired} "
              f"regime={regime_tag(theory.sigma) or '?'} sigma={theory.sigma!r}")


if __name__ == "__main__":
    main()
