"""
Scoring over HTTP
=================

Start the reward service on a free port, score one group, and compare the
response with a direct library call.
"""

import json
import threading
import urllib.request

from transit_rlvr.service import RewardServer, ServiceConfig, handle_score

server = RewardServer(("127.0.0.1", 0), ServiceConfig())
threading.Thread(target=server.serve_forever, daemon=True).start()

with urllib.request.urlopen(server.url + "/healthz") as resp:
    print(json.load(resp))

request = {
    "truth_minutes": 30,
    "responses": ["\\boxed{30}", "\\boxed{36}", "about forty", "\\boxed{55}"],
    "reward": {"kind": "R2", "delta": 10, "alpha": 2},
    "want_advantages": True,
}
req = urllib.request.Request(server.url + "/v1/score", json.dumps(request).encode(), {"Content-Type": "application/json"})
with urllib.request.urlopen(req) as resp:
    body = json.load(resp)
print(json.dumps(body, indent=2))
print("matches library call:", body == handle_score(request))

server.shutdown()
server.server_close()
