"""Clickstream traffic-role analysis toolkit.

Computes per-article searchshare and resistance from aggregated
(referrer, resource, count) transition logs, classifies articles into
entry/exit/relay roles, and characterizes those roles against network,
content/edit, and topic features.
"""

__version__ = "0.1.0"
