"""hullrec: unexpected-item recommendation from graph embeddings.

Learns latent vectors for users, items and related entities from type-biased
random walks over their interaction network, models each user's familiar
region as the convex hull of those vectors, and recommends items by a blend
of predicted rating and signed distance outside that hull.
"""

__version__ = "0.1.0"
