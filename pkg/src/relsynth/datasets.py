"""Small synthetic databases used by the tests, the benchmarks and the examples in the README.

Each generator returns a validated ``Database`` whose tables are already in
the canonical typed form that a CSV round trip would produce.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .database import Database, format_table, load_database, type_table, validate_database
from .schema import load_schema, parse_schema


def _table(name, pk, columns=(), fks=(), dimension=False, order=None):
    doc = {"name": name, "primary_key": pk,
           "columns": [{"name": c, "type": k} for c, k in columns],
           "foreign_keys": [{"column": c, "references_table": t, "references_column": p} for c, t, p in fks]}
    if dimension:
        doc["dimension"] = True
    if order:
        doc["order_column"] = order
    return doc


def _keys(n: int, prefix: str = "") -> np.ndarray:
    return np.array([f"{prefix}{i}" for i in range(n)], dtype=object)


def _build(doc: dict, frames: dict[str, dict]) -> Database:
    schema = parse_schema(doc)
    tables = {}
    for spec in schema.tables:
        frame = pd.DataFrame(frames[spec.name])
        tables[spec.name] = type_table(spec, format_table(spec, frame))
    db = Database(schema, tables)
    validate_database(db)
    return db


def _days(rng, n, start="2020-01-01", span=365):
    return np.datetime64(start) + rng.integers(0, span, n).astype("timedelta64[D]")


def toy_store(seed: int = 0, n_stores: int = 4, mean_sales: float = 6.0) -> Database:
    """Stores and their sales, with a few missing cells."""
    rng = np.random.default_rng(seed)
    regions = rng.choice(["north", "south", "east"], n_stores)
    size = np.round(rng.gamma(4.0, 50.0, n_stores), 1)
    n_sales = rng.poisson(mean_sales, n_stores)
    store_of = np.repeat(np.arange(n_stores), n_sales)
    m = len(store_of)
    amount = np.round(np.exp(rng.normal(3 + size[store_of] / 400, 0.5)), 2)
    amount[rng.random(m) < 0.1] = np.nan
    channel = rng.choice(np.array(["web", "shop"], dtype=object), m)
    channel[rng.random(m) < 0.05] = None
    doc = {"tables": [
        _table("store", "store_id", [("region", "categorical"), ("size", "numerical"),
                                     ("opened", "datetime")]),
        _table("sales", "sale_id", [("amount", "numerical"), ("channel", "categorical"),
                                    ("date", "datetime")], [("store_id", "store", "store_id")]),
    ]}
    return _build(doc, {
        "store": {"store_id": _keys(n_stores, "s"), "region": regions, "size": size,
                  "opened": _days(rng, n_stores, "2015-01-01", 1500)},
        "sales": {"sale_id": _keys(m, "t"), "amount": amount, "channel": channel,
                  "date": _days(rng, m), "store_id": _keys(n_stores, "s")[store_of]},
    })


def planted_correlation(n_parents: int = 1000, mean_children: float = 5.0, rho: float = 0.8,
                        seed: int = 0) -> Database:
    """Parents with a latent ``x``; every child's ``y`` has correlation ``rho`` with its parent's ``x``.

    Categorical columns carry a weaker dependency of the same kind, and the
    number of children grows with ``x`` so that aggregates are informative.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n_parents)
    group = np.where(x + rng.normal(scale=0.7, size=n_parents) > 0, "high", "low").astype(object)
    n_children = rng.poisson(mean_children, n_parents)
    parent_of = np.repeat(np.arange(n_parents), n_children)
    m = len(parent_of)
    y = rho * x[parent_of] + np.sqrt(1 - rho ** 2) * rng.normal(size=m)
    p_a = np.where(group[parent_of] == "high", 0.7, 0.3)
    kind = np.where(rng.random(m) < p_a, "a", "b").astype(object)
    doc = {"tables": [
        _table("parent", "parent_id", [("x", "numerical"), ("group", "categorical")]),
        _table("child", "child_id", [("y", "numerical"), ("kind", "categorical")],
               [("parent_id", "parent", "parent_id")]),
    ]}
    return _build(doc, {
        "parent": {"parent_id": _keys(n_parents), "x": np.round(x, 6), "group": group},
        "child": {"child_id": _keys(m), "y": np.round(y, 6), "kind": kind,
                  "parent_id": _keys(n_parents)[parent_of]},
    })


def planted_partition(block_size: int = 50, n_blocks: int = 2, p_in: float = 0.3, p_out: float = 0.01,
                      seed: int = 0) -> tuple[Database, np.ndarray]:
    """Undirected planted-partition graph stored as a node table plus an edge (junction) table.

    Returns the database and the true block of every node row.
    """
    rng = np.random.default_rng(seed)
    n = block_size * n_blocks
    truth = rng.permutation(np.repeat(np.arange(n_blocks), block_size))
    iu, ju = np.triu_indices(n, 1)
    p = np.where(truth[iu] == truth[ju], p_in, p_out)
    keep = rng.random(len(p)) < p
    a, b = iu[keep], ju[keep]
    flip = rng.random(len(a)) < 0.5
    a, b = np.where(flip, b, a), np.where(flip, a, b)
    doc = {"tables": [
        _table("node", "node_id", [("label", "categorical")]),
        _table("edge", "edge_id", [], [("src", "node", "node_id"), ("dst", "node", "node_id")]),
    ]}
    label = np.where(rng.random(n) < 0.8, truth, 1 - np.minimum(truth, 1)).astype(str).astype(object)
    db = _build(doc, {
        "node": {"node_id": _keys(n), "label": label},
        "edge": {"edge_id": _keys(len(a)), "src": _keys(n)[a], "dst": _keys(n)[b]},
    })
    return db, truth


def f1_like(seed: int = 0, n_circuits: int = 6, n_drivers: int = 30, races_per_circuit: int = 4,
            drivers_per_race: int = 10) -> Database:
    """Circuits -> races -> results <- drivers, with a frozen status lookup table.

    Circuits and drivers are split into two eras; a race fields 90% of its drivers
    from its circuit's era, which plants a block structure across the hierarchy.
    """
    rng = np.random.default_rng(seed)
    n_races = n_circuits * races_per_circuit
    race_circuit = np.repeat(np.arange(n_circuits), races_per_circuit)
    circuit_era = np.arange(n_circuits) % 2
    driver_era = rng.permutation(np.arange(n_drivers) % 2)
    n_home = int(round(0.9 * drivers_per_race))
    race_drivers = []
    for r in range(n_races):
        era = circuit_era[race_circuit[r]]
        home = rng.choice(np.nonzero(driver_era == era)[0], n_home, replace=False)
        away = rng.choice(np.nonzero(driver_era != era)[0], drivers_per_race - n_home, replace=False)
        race_drivers.append(np.concatenate([home, away]))
    res_race = np.repeat(np.arange(n_races), drivers_per_race)
    res_driver = np.concatenate(race_drivers)
    skill = rng.normal(size=n_drivers)
    pos = np.concatenate([np.argsort(np.argsort(-skill[d] + rng.normal(scale=0.8, size=len(d)))) + 1
                          for d in race_drivers]).astype(float)
    n_res = len(res_race)
    status_names = np.array(["finished", "accident", "engine", "+1 lap"], dtype=object)
    status = rng.choice(len(status_names), n_res, p=[0.7, 0.1, 0.1, 0.1])
    doc = {"tables": [
        _table("status", "status_id", [("status", "categorical")], dimension=True),
        _table("circuit", "circuit_id", [("country", "categorical"), ("lat", "numerical")]),
        _table("driver", "driver_id", [("nationality", "categorical"), ("born", "datetime")]),
        _table("race", "race_id", [("round", "numerical"), ("date", "datetime")],
               [("circuit_id", "circuit", "circuit_id")]),
        _table("result", "result_id", [("position", "numerical"), ("points", "numerical")],
               [("race_id", "race", "race_id"), ("driver_id", "driver", "driver_id"),
                ("status_id", "status", "status_id")]),
    ]}
    points = np.where(pos <= 3, 10 - 3 * (pos - 1), 0.0)
    return _build(doc, {
        "status": {"status_id": _keys(len(status_names)), "status": status_names},
        "circuit": {"circuit_id": _keys(n_circuits), "country": rng.choice(["it", "uk", "mc", "br"], n_circuits),
                    "lat": np.round(rng.uniform(-40, 60, n_circuits), 3)},
        "driver": {"driver_id": _keys(n_drivers), "nationality": rng.choice(["de", "fi", "gb", "es"], n_drivers),
                   "born": _days(rng, n_drivers, "1970-01-01", 9000)},
        "race": {"race_id": _keys(n_races), "round": (np.arange(n_races) % races_per_circuit + 1).astype(float),
                 "date": _days(rng, n_races, "2000-01-01", 7000), "circuit_id": _keys(n_circuits)[race_circuit]},
        "result": {"result_id": _keys(n_res), "position": pos, "points": points,
                   "race_id": _keys(n_races)[res_race], "driver_id": _keys(n_drivers)[res_driver],
                   "status_id": _keys(len(status_names))[status]},
    })


def cora_like(seed: int = 0, n_papers: int = 300, n_topics: int = 5, mean_refs: float = 4.0) -> Database:
    """Papers with a topic and a citation edge table; citations mostly stay within a topic."""
    rng = np.random.default_rng(seed)
    topic = rng.integers(0, n_topics, n_papers)
    pairs = set()
    for i in range(n_papers):
        k = rng.poisson(mean_refs)
        same = np.nonzero(topic == topic[i])[0]
        for _ in range(k):
            pool = same if rng.random() < 0.8 else np.arange(n_papers)
            j = int(rng.choice(pool))
            if j != i:
                pairs.add((i, j))
    pairs = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    doc = {"tables": [
        _table("paper", "paper_id", [("topic", "categorical"), ("words", "numerical")]),
        _table("cites", "cite_id", [], [("citing", "paper", "paper_id"), ("cited", "paper", "paper_id")]),
    ]}
    return _build(doc, {
        "paper": {"paper_id": _keys(n_papers), "topic": np.array([f"t{t}" for t in topic], dtype=object),
                  "words": rng.poisson(20 + 5 * topic).astype(float)},
        "cites": {"cite_id": _keys(len(pairs)), "citing": _keys(n_papers)[pairs[:, 0]],
                  "cited": _keys(n_papers)[pairs[:, 1]]},
    })


def berka_like(seed: int = 0, n_districts: int = 8, n_accounts: int = 120, n_clients: int = 150) -> Database:
    """Banking layout: a district lookup, accounts, clients, a dispositions junction with an attribute,
    loans and transactions."""
    rng = np.random.default_rng(seed)
    acc_district = rng.integers(0, n_districts, n_accounts)
    cli_district = rng.integers(0, n_districts, n_clients)
    disp_acc = np.concatenate([np.arange(n_accounts), rng.integers(0, n_accounts, n_clients // 3)])
    disp_cli = np.concatenate([rng.permutation(n_clients)[:n_accounts] if n_clients >= n_accounts
                               else rng.integers(0, n_clients, n_accounts),
                               rng.integers(0, n_clients, n_clients // 3)])
    uniq = np.unique(np.stack([disp_acc, disp_cli], 1), axis=0)
    disp_acc, disp_cli = uniq[:, 0], uniq[:, 1]
    n_disp = len(disp_acc)
    disp_type = np.where(rng.random(n_disp) < 0.75, "owner", "disponent").astype(object)
    has_loan = rng.random(n_accounts) < 0.3
    loan_acc = np.nonzero(has_loan)[0]
    n_trans = rng.poisson(8, n_accounts)
    trans_acc = np.repeat(np.arange(n_accounts), n_trans)
    wealth = rng.lognormal(8, 1, n_accounts)
    amount = np.round(wealth[trans_acc] * rng.lognormal(-3, 0.8, len(trans_acc)), 2)
    doc = {"tables": [
        _table("district", "district_id", [("region", "categorical"), ("population", "numerical")],
               dimension=True),
        _table("account", "account_id", [("frequency", "categorical"), ("opened", "datetime")],
               [("district_id", "district", "district_id")]),
        _table("client", "client_id", [("gender", "categorical"), ("birth", "datetime")],
               [("district_id", "district", "district_id")]),
        _table("disp", "disp_id", [("type", "categorical")],
               [("account_id", "account", "account_id"), ("client_id", "client", "client_id")]),
        _table("loan", "loan_id", [("amount", "numerical"), ("duration", "numerical")],
               [("account_id", "account", "account_id")]),
        _table("trans", "trans_id", [("amount", "numerical"), ("kind", "categorical")],
               [("account_id", "account", "account_id")]),
    ]}
    return _build(doc, {
        "district": {"district_id": _keys(n_districts), "region": rng.choice(["a", "b", "c"], n_districts),
                     "population": rng.integers(10_000, 1_000_000, n_districts).astype(float)},
        "account": {"account_id": _keys(n_accounts), "frequency": rng.choice(["monthly", "weekly"], n_accounts),
                    "opened": _days(rng, n_accounts, "1993-01-01", 2000),
                    "district_id": _keys(n_districts)[acc_district]},
        "client": {"client_id": _keys(n_clients), "gender": rng.choice(["f", "m"], n_clients),
                   "birth": _days(rng, n_clients, "1940-01-01", 20000),
                   "district_id": _keys(n_districts)[cli_district]},
        "disp": {"disp_id": _keys(n_disp), "type": disp_type, "account_id": _keys(n_accounts)[disp_acc],
                 "client_id": _keys(n_clients)[disp_cli]},
        "loan": {"loan_id": _keys(len(loan_acc)),
                 "amount": np.round(wealth[loan_acc] * rng.uniform(1, 5, len(loan_acc)), 0),
                 "duration": rng.choice([12, 24, 36, 48, 60], len(loan_acc)).astype(float),
                 "account_id": _keys(n_accounts)[loan_acc]},
        "trans": {"trans_id": _keys(len(trans_acc)), "amount": amount,
                  "kind": np.where(rng.random(len(trans_acc)) < 0.6, "credit", "debit").astype(object),
                  "account_id": _keys(n_accounts)[trans_acc]},
    })


def self_ref(seed: int = 0, n: int = 60) -> Database:
    """Employees with a nullable manager reference into the same table and an order column."""
    rng = np.random.default_rng(seed)
    manager = np.array([None] + [f"{int(rng.integers(0, i))}" for i in range(1, n)], dtype=object)
    salary = np.round(rng.lognormal(10, 0.3, n), 0)
    doc = {"tables": [
        _table("employee", "emp_id", [("dept", "categorical"), ("salary", "numerical"), ("hired", "numerical")],
               [("manager_id", "employee", "emp_id")], order="hired"),
    ]}
    return _build(doc, {
        "employee": {"emp_id": _keys(n), "dept": rng.choice(["ops", "eng", "sales"], n), "salary": salary,
                     "hired": np.arange(n, dtype=float), "manager_id": manager},
    })


def snowflake(seed: int = 0, n_components: int = 10) -> Database:
    """Customers with orders and order lines; every customer spans its own connected component."""
    rng = np.random.default_rng(seed)
    n_orders = rng.integers(1, 5, n_components)
    order_cust = np.repeat(np.arange(n_components), n_orders)
    n_lines = rng.integers(1, 4, len(order_cust))
    line_order = np.repeat(np.arange(len(order_cust)), n_lines)
    doc = {"tables": [
        _table("customer", "customer_id", [("segment", "categorical")]),
        _table("orders", "order_id", [("total", "numerical")], [("customer_id", "customer", "customer_id")]),
        _table("line", "line_id", [("qty", "numerical"), ("product", "categorical")],
               [("order_id", "orders", "order_id")]),
    ]}
    return _build(doc, {
        "customer": {"customer_id": _keys(n_components), "segment": rng.choice(["retail", "pro"], n_components)},
        "orders": {"order_id": _keys(len(order_cust)), "total": np.round(rng.gamma(2, 30, len(order_cust)), 2),
                   "customer_id": _keys(n_components)[order_cust]},
        "line": {"line_id": _keys(len(line_order)), "qty": rng.integers(1, 6, len(line_order)).astype(float),
                 "product": rng.choice(["p1", "p2", "p3"], len(line_order)),
                 "order_id": _keys(len(order_cust))[line_order]},
    })


def tiny_hetero() -> Database:
    """Six entity rows over three tables plus a two-row dimension table.

    Small enough for finite-difference gradient checks while still exercising
    every input path: numerics with a gap, categoricals, a dimension reference,
    an ordered table and two levels of foreign keys.
    """
    doc = {"tables": [
        _table("color", "color_id", [("hue", "categorical")], dimension=True),
        _table("author", "author_id", [("age", "numerical"), ("tier", "categorical")]),
        _table("post", "post_id", [("length", "numerical"), ("topic", "categorical"), ("day", "numerical")],
               [("author_id", "author", "author_id"), ("color_id", "color", "color_id")], order="day"),
        _table("comment", "comment_id", [("score", "numerical")], [("post_id", "post", "post_id")]),
    ]}
    return _build(doc, {
        "color": {"color_id": ["c0", "c1"], "hue": ["red", "blue"]},
        "author": {"author_id": ["a0", "a1"], "age": [31.0, 47.0], "tier": ["gold", "free"]},
        "post": {"post_id": ["p0", "p1", "p2"], "length": [120.0, np.nan, 80.0], "topic": ["x", "y", "x"],
                 "day": [1.0, 2.0, 5.0], "author_id": ["a0", "a0", "a1"], "color_id": ["c0", "c1", "c1"]},
        "comment": {"comment_id": ["m0"], "score": [3.0], "post_id": ["p2"]},
    })


def toy_dir() -> Path:
    """Directory of the bundled toy database (``schema.json`` plus one CSV per table)."""
    return Path(str(resources.files("relsynth") / "data" / "toy"))


def load_toy() -> Database:
    root = toy_dir()
    return load_database(load_schema(root / "schema.json"), root)


GENERATORS = {
    "toy_store": toy_store,
    "planted_correlation": planted_correlation,
    "f1_like": f1_like,
    "cora_like": cora_like,
    "berka_like": berka_like,
    "self_ref": self_ref,
    "snowflake": snowflake,
    "tiny_hetero": tiny_hetero,
}
