#!/usr/bin/env python3
"""Zero-shot forecasting with social prompts, using the deterministic mock
client so the demo runs offline.

Three modes mirror the comparison the pipeline supports:
  baseline  the prompt carries only profile, history, and headline
  latent    adds the extracted latent persona
  social    also folds the top-K most-followed neighbors' personas into a
            social context before predicting

Swap MockLlmClient for RemoteChatClient(RemoteConfig(base_url=..., model=...))
to run against a real OpenAI-compatible endpoint (token read from
OPENAI_API_KEY by default).
"""

from beliefcast import (
    MockLlmClient,
    SynthConfig,
    build_graph,
    filter_neighbors,
    generate_world,
    run_zero_shot_eval,
)
from beliefcast.persona import extract_latent_persona
from beliefcast.zeroshot import aggregate_social_context

config = SynthConfig(
    n_users=50, n_communities=2, n_news=12, responses_per_news=10,
    lurker_fraction=0.4, seed=23,
)
dataset, gold_personas = generate_world(config)
graph = build_graph(dataset, gold_personas)
client = MockLlmClient(seed=23)

# Peek at one user's pipeline: neighbors -> personas -> social context.
some_user = dataset.samples("test")[0].user_id
ranked = filter_neighbors(graph, dataset.users, some_user, k=5)
print(f"user {some_user}: top neighbors by follower count -> {ranked}")
neighbor_personas = [
    extract_latent_persona(client, dataset.users[nid]) for nid in ranked
]
context = aggregate_social_context(client, neighbor_personas, user_id=some_user)
print(f"social context: {context.summary!r}\n")

for mode in ("baseline", "latent", "social"):
    report, records = run_zero_shot_eval(graph, dataset, client, mode=mode, k=25)
    print(
        f"{mode:>8}: MiF1 {report.mif1:6.2f}  MaF1 {report.maf1:6.2f}  "
        f"r_s {report.r_s:6.2f}  ({report.n_samples} samples, "
        f"{report.n_failures} failures)"
    )
print("\nscores here come from the hash-driven mock; the pipeline shape,")
print("caching, and determinism are what this demo exercises.")
