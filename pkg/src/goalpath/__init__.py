"""Goal-oriented next-best-activity recommendation for business processes.

Learns, from a historical event log, a policy that recommends activity
sequences which conform to the discovered directly-follows graph and steer
the case toward a KPI goal (e.g. completion time below a threshold).
"""

__version__ = "0.1.0"
