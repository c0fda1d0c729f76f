"""Benchmark workflows: car dealerships and Arctic weather stations.

The dealership workflow has a request module feeding four dealers in
parallel, an aggregator picking the lowest bid, a buyer choice, an xor
module routing an accepted bid back to the winning dealer and a final car
module. Each dealer appears twice in the DAG (bid phase and purchase phase)
and both nodes share the dealer module's state.

The Arctic workflow sends the current (year, month) and a selectivity key
to every station; each station records a new measurement, computes its
lowest temperature over the selected observations and combines it with the
minima of upstream stations. Stations are wired in parallel, in series or in
dense layers.
"""

from __future__ import annotations

import csv
import io
import math
import random
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

from . import provgraph as pg
from .evalengine import BBRegistry
from .pigparse import parse
from .provquery import critical_tokens
from .relmodel import Bag, Schema
from .workflow import (
    BBDecl,
    Edge,
    ModuleSpec,
    Runner,
    Workflow,
    WorkflowFile,
)

# -- reference black boxes ---------------------------------------------------------

GERMAN_MODELS = (
    "Audi A3", "Audi A4", "Audi A6", "BMW 3", "BMW 5", "BMW X5",
    "Mercedes A", "Mercedes C", "Mercedes E", "Opel Astra", "Porsche 911", "VW Golf",
)

BASE_PRICES = {
    "Audi A3": 28000, "Audi A4": 36000, "Audi A6": 48000, "BMW 3": 38000, "BMW 5": 52000,
    "BMW X5": 60000, "Mercedes A": 30000, "Mercedes C": 42000, "Mercedes E": 54000,
    "Opel Astra": 21000, "Porsche 911": 95000, "VW Golf": 24000,
    # models of the worked example
    "Accord": 24000, "Civic": 20000,
}

BID_SCHEMA = Schema.parse("Bid(BidId:chararray, UserId:chararray, Model:chararray, Amount:double, DealerNo:int)")
SINGLE_BID_SCHEMA = Schema.parse("Bid(BidId:chararray, UserId:chararray, Model:chararray, Amount:double)")


def bid_amount(model: str, num_avail: int, num_sold: int, dealer_no: int = 0, previous: float | None = None):
    """Deterministic dealer bid; None when the dealer has no car of the model left.

    List price, raised by 5% times the fraction of the model's stock already
    sold, plus a cent per dealer number so bids from different dealers differ.
    """
    available = num_avail - num_sold
    if available <= 0:
        return None
    base = BASE_PRICES.get(model, 30000)
    amount = round(base * (1 + 0.05 * num_sold / num_avail)) + 0.01 * dealer_no
    if previous is not None:
        amount = min(amount, previous) - 1
    return round(amount, 2)


def _single(bag, pos, default=0):
    rows = list(bag) if bag is not None else []
    return rows[0][pos] if rows else default


def calc_bid(requests: Bag, num_cars: Bag, num_sold: Bag, history: Bag = Bag(), me: Bag = Bag()):
    """One bid per request. ``history`` holds this buyer's earlier bids on the model."""
    avail = _single(num_cars, 1)
    sold = _single(num_sold, 1)
    dealer_no = _single(me, 0)
    out = []
    for user, bid_id, model in sorted(requests):
        previous = [r[3] for r in history if r[1] == user]
        amount = bid_amount(model, avail, sold, dealer_no, min(previous) if previous else None)
        if amount is not None:
            out.append((bid_id, user, model, float(amount), dealer_no))
    return out


def calc_bid_single(requests: Bag, num_cars: Bag, num_sold: Bag):
    """Three-argument variant used by the single-dealer worked example."""
    return [r[:4] for r in calc_bid(requests, num_cars, num_sold)]


# -- dealership workflow ---------------------------------------------------------------

REQUEST = "UserId:chararray, BidId:chararray, Model:chararray"
ACCEPTED = "BidId:chararray, UserId:chararray, Model:chararray, Price:double, DealerNo:int"
BIDS = "BidId:chararray, UserId:chararray, Model:chararray, Price:double, DealerNo:int"


def _dealer_module(k: int) -> ModuleSpec:
    q_state = parse("""
        -- bid phase
        ReqModel = FOREACH Requests GENERATE Model;
        Inv0 = JOIN Cars BY Model, ReqModel BY Model;
        Inventory = FOREACH Inv0 GENERATE CarId, Cars::Model AS Model;
        SoldInventory = JOIN Inventory BY CarId, SoldCars BY CarId;
        CarsByModel = GROUP Inventory BY Model;
        SoldByModel = GROUP SoldInventory BY Model;
        NumCarsByModel = FOREACH CarsByModel GENERATE group AS Model, COUNT(Inventory) AS NumAvail;
        NumSoldByModel = FOREACH SoldByModel GENERATE group AS Model, COUNT(SoldInventory) AS NumSold;
        ReqUser = FOREACH Requests GENERATE UserId;
        Hist0 = JOIN InventoryBids BY UserId, ReqUser BY UserId;
        History = FOREACH Hist0 GENERATE BidId, InventoryBids::UserId AS UserId, Model, Amount;
        AllInfoByModel = COGROUP Requests BY Model, NumCarsByModel BY Model, NumSoldByModel BY Model,
                                 History BY Model;
        NewBids = FOREACH AllInfoByModel GENERATE
                  FLATTEN(CalcBid(Requests, NumCarsByModel, NumSoldByModel, History, Me));
        NewInvBids = FOREACH NewBids GENERATE BidId, UserId, Model, Amount;
        InventoryBids = UNION InventoryBids, NewInvBids;
        -- purchase phase
        Mine0 = JOIN Accepted BY DealerNo, Me BY DealerNo;
        Mine = FOREACH Mine0 GENERATE BidId, UserId, Model;
        ModelCars0 = JOIN Cars BY Model, Mine BY Model;
        ModelCars = FOREACH ModelCars0 GENERATE CarId, CarNo, Cars::Model AS Model;
        CarStatus = COGROUP ModelCars BY CarId, SoldCars BY CarId;
        CarSales = FOREACH CarStatus GENERATE group AS CarId, COUNT(SoldCars) AS Sales;
        Unsold = FILTER CarSales BY Sales == 0;
        Free0 = JOIN Unsold BY CarId, ModelCars BY CarId;
        Free = FOREACH Free0 GENERATE Unsold::CarId AS CarId, CarNo, Model;
        FreeByModel = GROUP Free BY Model;
        First = FOREACH FreeByModel GENERATE group AS Model, MIN(Free.CarNo) AS CarNo;
        Pick0 = JOIN First BY CarNo, Free BY CarNo;
        Pick = FOREACH Pick0 GENERATE CarId, Free::Model AS Model;
        Sale0 = JOIN Pick BY Model, Mine BY Model;
        NewSold = FOREACH Sale0 GENERATE CarId, BidId;
        SoldCars = UNION SoldCars, NewSold;
    """)
    q_out = parse(f"""
        Bids{k} = FOREACH NewBids GENERATE BidId, UserId, Model, Amount AS Price, DealerNo;
        Sold{k} = FOREACH NewSold GENERATE CarId, BidId;
    """)
    return ModuleSpec(
        f"M_dealer{k}",
        (Schema.parse(f"Requests({REQUEST})"), Schema.parse(f"Accepted({ACCEPTED})")),
        (
            Schema.parse("Cars(CarId:chararray, Model:chararray, CarNo:int)"),
            Schema.parse("SoldCars(CarId:chararray, BidId:chararray)"),
            Schema.parse("InventoryBids(BidId:chararray, UserId:chararray, Model:chararray, Amount:double)"),
            Schema.parse("Me(DealerNo:int)"),
        ),
        (Schema.parse(f"Bids{k}({BIDS})"), Schema.parse(f"Sold{k}(CarId:chararray, BidId:chararray)")),
        q_state,
        q_out,
    )


def dealership_modules() -> dict[str, ModuleSpec]:
    mods = {
        "M_request": ModuleSpec(
            "M_request", (Schema.parse(f"BuyerInput({REQUEST})"),), (), (Schema.parse(f"BuyerRequests({REQUEST})"),),
            parse(""), parse("BuyerRequests = FOREACH BuyerInput GENERATE UserId, BidId, Model;"),
        ),
        "M_and": ModuleSpec(
            "M_and", (Schema.parse(f"BuyerRequests({REQUEST})"),), (),
            (Schema.parse(f"Requests({REQUEST})"), Schema.parse(f"Accepted({ACCEPTED})")),
            parse(""),
            parse("""
                Requests = FOREACH BuyerRequests GENERATE UserId, BidId, Model;
                NoAcc = FOREACH BuyerRequests GENERATE BidId, UserId, Model, 0.0 AS Price, 0 AS DealerNo;
                Accepted = FILTER NoAcc BY false;
            """),
        ),
        "M_choice": ModuleSpec(
            "M_choice", (Schema.parse("Choice(UserId:chararray, Reserve:double, Accept:boolean)"),), (),
            (Schema.parse("Decision(UserId:chararray, Reserve:double, Accept:boolean)"),),
            parse(""), parse("Decision = FOREACH Choice GENERATE UserId, Reserve, Accept;"),
        ),
        "M_agg": ModuleSpec(
            "M_agg", tuple(Schema.parse(f"Bids{k}({BIDS})") for k in range(1, 5)), (),
            (Schema.parse(f"Best({BIDS})"),),
            parse(""),
            parse("""
                AllBids = UNION Bids1, Bids2, Bids3, Bids4;
                ByUser = GROUP AllBids BY UserId;
                Low = FOREACH ByUser GENERATE group AS UserId, MIN(AllBids.Price) AS Price;
                Best0 = JOIN Low BY Price, AllBids BY Price;
                Best = FOREACH Best0 GENERATE BidId, AllBids::UserId AS UserId, Model, AllBids::Price AS Price, DealerNo;
            """),
        ),
        "M_xor": ModuleSpec(
            "M_xor",
            (Schema.parse(f"Best({BIDS})"), Schema.parse("Decision(UserId:chararray, Reserve:double, Accept:boolean)")),
            (),
            (Schema.parse(f"Requests({REQUEST})"), Schema.parse(f"Accepted({ACCEPTED})")),
            parse(""),
            parse("""
                Offer = JOIN Best BY UserId, Decision BY UserId;
                Taken = FILTER Offer BY Price <= Reserve AND Accept == true;
                Accepted = FOREACH Taken GENERATE BidId, Best::UserId AS UserId, Model, Price, DealerNo;
                NoReq = FOREACH Best GENERATE UserId, BidId, Model;
                Requests = FILTER NoReq BY false;
            """),
        ),
        "M_car": ModuleSpec(
            "M_car", tuple(Schema.parse(f"Sold{k}(CarId:chararray, BidId:chararray)") for k in range(1, 5)), (),
            (Schema.parse("Purchase(CarId:chararray, BidId:chararray)"),),
            parse(""), parse("Purchase = UNION Sold1, Sold2, Sold3, Sold4;"),
        ),
    }
    for k in range(1, 5):
        mods[f"M_dealer{k}"] = _dealer_module(k)
    return mods


def dealership_workflow() -> Workflow:
    nodes = {"request": "M_request", "and": "M_and", "agg": "M_agg", "choice": "M_choice",
             "xor": "M_xor", "car": "M_car"}
    edges = [Edge("request", "and", ("BuyerRequests",))]
    for k in range(1, 5):
        nodes[f"d{k}"] = f"M_dealer{k}"
        nodes[f"p{k}"] = f"M_dealer{k}"
        edges += [
            Edge("and", f"d{k}", ("Requests", "Accepted")),
            Edge(f"d{k}", "agg", (f"Bids{k}",)),
            Edge("xor", f"p{k}", ("Requests", "Accepted")),
            Edge(f"p{k}", "car", (f"Sold{k}",)),
        ]
    edges += [Edge("agg", "xor", ("Best",)), Edge("choice", "xor", ("Decision",))]
    return Workflow(nodes, edges, ("choice", "request"), ("car",))


@dataclass(frozen=True)
class DealershipParams:
    numCars: int = 2000
    numExec: int = 10
    seed: int = 0
    reservePriceRange: tuple = (0.9, 1.3)  # fraction of the model's base price
    acceptProbabilityRange: tuple = (0.0, 0.2)
    acceptLast: bool = False  # buyer accepts at the final execution if still unsold

    def __post_init__(self):
        if self.numCars <= 0 or self.numCars % 4:
            raise ValueError("numCars must be a positive multiple of 4")
        if self.numExec < 1:
            raise ValueError("numExec must be at least 1")


@dataclass
class GeneratedRun:
    """Everything needed to run one benchmark instance."""

    family: str
    workflow: Workflow
    modules: dict
    blackboxes: list
    state: dict  # module -> relation -> rows
    inputs: list  # per execution: In node -> relation -> rows
    params: object = None
    stop_on_output: bool = False

    def registry(self) -> BBRegistry:
        return WorkflowFile(self.modules, self.workflow, self.blackboxes).registry()

    def workflow_file(self) -> WorkflowFile:
        return WorkflowFile(self.modules, self.workflow, self.blackboxes)

    def runner(self, *, provenance: bool = True, **flags) -> Runner:
        return Runner(self.workflow, self.modules, self.registry(), provenance=provenance, **flags)

    def run(self, *, provenance: bool = True, **flags):
        runner = self.runner(provenance=provenance, **flags)
        state = runner.initial_state(self.state)
        stop = _has_output if self.stop_on_output else None
        return runner.execute_sequence(self.inputs, state, stop=stop)


def _has_output(record) -> bool:
    return any(len(rel) for rels in record.outputs.values() for rel in rels.values())


def gen_dealerships(params: DealershipParams) -> GeneratedRun:
    rng = random.Random(params.seed)
    per_dealer = params.numCars // 4
    state = {}
    for k in range(1, 5):
        cars = [(f"C{k}_{i:05d}", rng.choice(GERMAN_MODELS), i) for i in range(per_dealer)]
        state[f"M_dealer{k}"] = {"Cars": cars, "Me": [(k,)]}
    user = f"U{rng.randrange(10**6):06d}"
    model = rng.choice(GERMAN_MODELS)
    reserve = round(BASE_PRICES[model] * rng.uniform(*params.reservePriceRange), 2)
    accept_p = rng.uniform(*params.acceptProbabilityRange)
    inputs = []
    for e in range(params.numExec):
        accept = rng.random() < accept_p or (params.acceptLast and e == params.numExec - 1)
        inputs.append({
            "request": {"BuyerInput": [(user, f"B{e:04d}", model)]},
            "choice": {"Choice": [(user, float(reserve) if not (params.acceptLast and e == params.numExec - 1)
                                   else float(10 * BASE_PRICES[model]), accept)]},
        })
    blackboxes = [BBDecl("CalcBid", "lipstick.workflowgen:calc_bid", BID_SCHEMA)]
    return GeneratedRun("dealerships", dealership_workflow(), dealership_modules(), blackboxes, state, inputs,
                        params, stop_on_output=True)


def example_dealer_module() -> ModuleSpec:
    """The single dealer of the worked example: bid requests only, three-way COGROUP."""
    q_state = parse("""
        ReqModel = FOREACH Requests GENERATE Model;
        Inv0 = JOIN Cars BY Model, ReqModel BY Model;
        Inventory = FOREACH Inv0 GENERATE CarId, Cars::Model AS Model;
        SoldInventory = JOIN Inventory BY CarId, SoldCars BY CarId;
        CarsByModel = GROUP Inventory BY Model;
        SoldByModel = GROUP SoldInventory BY Model;
        NumCarsByModel = FOREACH CarsByModel GENERATE group AS Model, COUNT(Inventory) AS NumAvail;
        NumSoldByModel = FOREACH SoldByModel GENERATE group AS Model, COUNT(SoldInventory) AS NumSold;
        AllInfoByModel = COGROUP Requests BY Model, NumCarsByModel BY Model, NumSoldByModel BY Model;
        NewBids = FOREACH AllInfoByModel GENERATE FLATTEN(CalcBid(Requests, NumCarsByModel, NumSoldByModel));
        InventoryBids = UNION InventoryBids, NewBids;
    """)
    q_out = parse("Bids = FOREACH NewBids GENERATE Model, Amount AS Price;")
    return ModuleSpec(
        "M_dealer1",
        (Schema.parse(f"Requests({REQUEST})"),),
        (
            Schema.parse("Cars(CarId:chararray, Model:chararray)"),
            Schema.parse("SoldCars(CarId:chararray, BidId:chararray)"),
            Schema.parse("InventoryBids(BidId:chararray, UserId:chararray, Model:chararray, Amount:double)"),
        ),
        (Schema.parse("Bids(Model:chararray, Price:double)"),),
        q_state,
        q_out,
    )


def example_run() -> GeneratedRun:
    """Three cars, one Civic request, nothing sold and no earlier bids."""
    mod = example_dealer_module()
    wf = Workflow({"dealer1": mod.name}, [], ("dealer1",), ("dealer1",))
    state = {mod.name: {"Cars": [("C_1", "Accord"), ("C_2", "Civic"), ("C_3", "Civic")]}}
    inputs = [{"dealer1": {"Requests": [("P_1", "B_1", "Civic")]}}]
    blackboxes = [BBDecl("CalcBid", "lipstick.workflowgen:calc_bid_single", SINGLE_BID_SCHEMA)]
    return GeneratedRun("example", wf, {mod.name: mod}, blackboxes, state, inputs)


# -- Arctic stations ------------------------------------------------------------------------

TOPOLOGIES = ("parallel", "serial", "dense")
SELECTIVITIES = ("all", "season", "month", "year")
VARIABLES = ("Temp", "Pressure", "Humidity", "Wind", "Precip", "Cloud")
FIRST_YEAR, LAST_YEAR = 1961, 2000
# mean air temperature per month, degrees C, for a high-latitude coastal site
MONTH_MEAN = (-27.0, -27.5, -25.0, -17.0, -6.0, 1.0, 4.5, 3.5, -1.0, -10.0, -19.0, -24.5)

OBS_ATTRS = "Year:int, Month:int, " + ", ".join(f"{v}:double" for v in VARIABLES) + \
    ", KAll:chararray, KSeason:chararray, KMonth:chararray, KYear:chararray"
OBS_SCHEMA = Schema.parse(f"Obs({OBS_ATTRS})")
MEASURE_SCHEMA = Schema.parse(f"Measurement({OBS_ATTRS})")
REQ = "Year:int, Month:int, Key:chararray"
MINTEMP = "Key:chararray, Temp:double"


def season(month: int) -> str:
    return ("DJF", "DJF", "MAM", "MAM", "MAM", "JJA", "JJA", "JJA", "SON", "SON", "SON", "DJF")[month - 1]


def selection_keys(year: int, month: int) -> tuple[str, str, str, str]:
    return ("all", f"season:{season(month)}", f"month:{month}", f"year:{year}")


def selection_key(selectivity: str, year: int, month: int) -> str:
    return selection_keys(year, month)[SELECTIVITIES.index(selectivity)]


def observation(station: int, seed: int, year: int, month: int) -> tuple:
    """Deterministic synthetic monthly record for one station."""
    rng = random.Random(f"{seed}:{station}:{year}:{month}")
    temp = MONTH_MEAN[month - 1] - 0.4 * (station % 7) + rng.uniform(-6.0, 6.0)
    values = (
        round(temp, 1),
        round(rng.uniform(990.0, 1030.0), 1),
        round(rng.uniform(60.0, 100.0), 1),
        round(rng.uniform(0.0, 25.0), 1),
        round(rng.uniform(0.0, 80.0), 1),
        round(rng.uniform(0.0, 10.0), 1),
    )
    return (year, month) + values + selection_keys(year, month)


def measure(station: int, seed: int, year: int, month: int):
    """Station instrument: the observation for the current month."""
    return [observation(station, seed, year, month)]


@dataclass(frozen=True)
class ArcticParams:
    topology: str = "parallel"
    numStations: int = 4
    fanout: int = 2
    selectivity: str = "month"
    numExec: int = 1
    seed: int = 0
    startYear: int = 2001
    startMonth: int = 1

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")
        if not 2 <= self.numStations <= 24:
            raise ValueError("numStations must be between 2 and 24")
        if self.selectivity not in SELECTIVITIES:
            raise ValueError(f"selectivity must be one of {SELECTIVITIES}")
        if self.numExec < 1:
            raise ValueError("numExec must be at least 1")
        if self.topology == "dense" and (self.fanout < 1 or self.numStations % self.fanout):
            raise ValueError("dense topology needs a fanout dividing numStations")


def station_layers(params: ArcticParams) -> list[list[int]]:
    k = params.numStations
    if params.topology == "parallel":
        return [list(range(1, k + 1))]
    if params.topology == "serial":
        return [[i] for i in range(1, k + 1)]
    f = params.fanout
    return [list(range(i, i + f)) for i in range(1, k + 1, f)]


def arctic_modules(params: ArcticParams) -> dict[str, ModuleSpec]:
    layers = station_layers(params)
    mods = {
        "M_in": ModuleSpec(
            "M_in", (Schema.parse(f"Clock({REQ})"),), (), (Schema.parse(f"Req({REQ})"),),
            parse(""), parse("Req = FOREACH Clock GENERATE Year, Month, Key;"),
        )
    }
    previous: list[int] = []
    for layer in layers:
        for i in layer:
            mods[f"M_sta_{i}"] = station_module(i, previous)
        previous = layer
    last = ", ".join(f"MinTemp{j}" for j in previous)
    gather = f"Cands = UNION {last};" if len(previous) > 1 else f"Cands = FOREACH MinTemp{previous[0]} GENERATE Key, Temp;"
    mods["M_out"] = ModuleSpec(
        "M_out", tuple(Schema.parse(f"MinTemp{j}({MINTEMP})") for j in previous), (),
        (Schema.parse(f"Result({MINTEMP})"),),
        parse(""),
        parse(f"""
            {gather}
            ByKey = GROUP Cands BY Key;
            Result = FOREACH ByKey GENERATE group AS Key, MIN(Cands.Temp) AS Temp;
        """),
    )
    return mods


def station_module(i: int, upstream: Sequence[int]) -> ModuleSpec:
    """Station ``i``: record this month's measurement, then the minimum over the selection.

    The selection joins the observations with the request key on each of the
    four key columns; only the join on the matching column yields tuples.
    """
    if upstream:
        combine = "Cands = UNION " + ", ".join(["Local"] + [f"MinTemp{j}" for j in upstream]) + ";"
    else:
        combine = "Cands = FOREACH Local GENERATE Key, Temp;"
    q_state = parse("""
        NewObs = FOREACH Req GENERATE FLATTEN(Measure(Year, Month, Station));
        Obs = UNION Obs, NewObs;
    """)
    q_out = parse(f"""
        SelAll = JOIN Obs BY KAll, Req BY Key;
        SelSeason = JOIN Obs BY KSeason, Req BY Key;
        SelMonth = JOIN Obs BY KMonth, Req BY Key;
        SelYear = JOIN Obs BY KYear, Req BY Key;
        Selected = UNION SelAll, SelSeason, SelMonth, SelYear;
        SelByKey = GROUP Selected BY Key;
        Local = FOREACH SelByKey GENERATE group AS Key, MIN(Selected.Temp) AS Temp;
        {combine}
        CandsByKey = GROUP Cands BY Key;
        MinTemp{i} = FOREACH CandsByKey GENERATE group AS Key, MIN(Cands.Temp) AS Temp;
    """)
    return ModuleSpec(
        f"M_sta_{i}",
        (Schema.parse(f"Req({REQ})"),) + tuple(Schema.parse(f"MinTemp{j}({MINTEMP})") for j in upstream),
        (OBS_SCHEMA, Schema.parse("Station(StationNo:int, Seed:int)")),
        (Schema.parse(f"MinTemp{i}({MINTEMP})"),),
        q_state,
        q_out,
    )


def arctic_workflow(params: ArcticParams) -> Workflow:
    layers = station_layers(params)
    nodes = {"in": "M_in", "out": "M_out"}
    edges = []
    previous: list[int] = []
    for layer in layers:
        for i in layer:
            nodes[f"sta{i:02d}"] = f"M_sta_{i}"
            edges.append(Edge("in", f"sta{i:02d}", ("Req",)))
            edges.extend(Edge(f"sta{j:02d}", f"sta{i:02d}", (f"MinTemp{j}",)) for j in previous)
        previous = layer
    edges.extend(Edge(f"sta{j:02d}", "out", (f"MinTemp{j}",)) for j in previous)
    return Workflow(nodes, edges, ("in",), ("out",))


def station_observations(station: int, seed: int) -> list[tuple]:
    return [observation(station, seed, y, m) for y in range(FIRST_YEAR, LAST_YEAR + 1) for m in range(1, 13)]


def measure_bb(year: int, month: int, station: Bag):
    """Black box: the station's measurement for (year, month)."""
    rows = list(station)
    if len(rows) != 1:
        raise ValueError("Station relation must hold exactly one tuple")
    station_no, seed = rows[0]
    return measure(station_no, seed, year, month)


def clock(params: ArcticParams, execution: int) -> tuple[int, int]:
    months = params.startYear * 12 + params.startMonth - 1 + execution
    return months // 12, months % 12 + 1


def gen_arctic(params: ArcticParams) -> GeneratedRun:
    state = {}
    for i in range(1, params.numStations + 1):
        state[f"M_sta_{i}"] = {"Obs": station_observations(i, params.seed), "Station": [(i, params.seed)]}
    inputs = []
    for e in range(params.numExec):
        year, month = clock(params, e)
        inputs.append({"in": {"Clock": [(year, month, selection_key(params.selectivity, year, month))]}})
    blackboxes = [BBDecl("Measure", "lipstick.workflowgen:measure_bb", MEASURE_SCHEMA)]
    return GeneratedRun("arctic", arctic_workflow(params), arctic_modules(params), blackboxes, state, inputs, params)


def selected_observations(params: ArcticParams, station: int, executions: int) -> list[tuple]:
    """Direct scan: the observations station ``station`` selects at execution ``executions - 1``."""
    year, month = clock(params, executions - 1)
    key = selection_key(params.selectivity, year, month)
    col = OBS_SCHEMA.names.index(("KAll", "KSeason", "KMonth", "KYear")[SELECTIVITIES.index(params.selectivity)])
    obs = station_observations(station, params.seed)
    obs += [observation(station, params.seed, *clock(params, e)) for e in range(executions)]
    return [o for o in obs if o[col] == key]


def direct_minimum(params: ArcticParams, executions: int) -> float:
    return min(o[2] for i in range(1, params.numStations + 1) for o in selected_observations(params, i, executions))


# -- benchmark runner ---------------------------------------------------------------------

CSV_COLUMNS = ("family", "topology", "modules", "fanout", "selectivity", "numCars", "numExec", "repetition",
               "prov", "exec_time_ms", "graph_nodes", "graph_edges", "build_time_ms", "mean_dependency_fraction")


def state_tokens(graph: pg.ProvGraph) -> list[int]:
    return [n for n in graph.tokens() if graph.nodes[n].cls == "s"]


def output_dependency_fractions(log) -> list[float]:
    """Fraction of state tokens each workflow output tuple depends on."""
    graph = log.graph
    tokens = set(state_tokens(graph))
    memo: dict = {}
    fractions = []
    for record in log.executions:
        for rels in record.outputs.values():
            for rel in rels.values():
                for t in rel.tuples:
                    crit = critical_tokens(graph, t.pnode, memo)
                    fractions.append(len(crit & tokens) / len(tokens) if tokens else 0.0)
    return fractions


@dataclass
class BenchmarkRow:
    family: str
    topology: str
    modules: int
    fanout: int
    selectivity: str
    numCars: int
    numExec: int
    repetition: int
    prov: str
    exec_time_ms: float
    graph_nodes: int
    graph_edges: int
    build_time_ms: float
    mean_dependency_fraction: float

    def as_list(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)

    def means(self) -> list[BenchmarkRow]:
        """One row per (prov on/off) with timings averaged over repetitions."""
        out = []
        for prov in ("on", "off"):
            rows = [r for r in self.rows if r.prov == prov]
            if not rows:
                continue
            first = rows[0]
            out.append(replace(
                first,
                repetition=len(rows),
                exec_time_ms=statistics.fmean(r.exec_time_ms for r in rows),
                build_time_ms=statistics.fmean(r.build_time_ms for r in rows),
            ))
        return out

    def to_csv(self, *, mean: bool = False) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in (self.means() if mean else self.rows):
            writer.writerow(row.as_list())
        return buf.getvalue()


def _describe(run: GeneratedRun) -> dict:
    p = run.params
    if run.family == "arctic":
        return dict(topology=p.topology, modules=len(run.workflow.nodes), fanout=p.fanout if p.topology == "dense" else 0,
                    selectivity=p.selectivity, numCars=0, numExec=p.numExec)
    num_cars = p.numCars if p is not None else 0
    num_exec = p.numExec if p is not None else len(run.inputs)
    return dict(topology="fixed", modules=len(run.workflow.nodes), fanout=0, selectivity="", numCars=num_cars,
                numExec=num_exec)


def run_benchmark(run: GeneratedRun, repetitions: int = 5, *, dependencies: bool = True) -> BenchmarkReport:
    """Execute ``run`` with provenance on and off, ``repetitions`` times each.

    Execution time covers the whole sequence; build time is the part of a
    provenance-on run beyond the mean provenance-off time, floored at zero.
    """
    desc = _describe(run)
    report = BenchmarkReport()
    off_times = []
    for rep in range(repetitions):
        t0 = time.perf_counter()
        run.run(provenance=False)
        off_times.append((time.perf_counter() - t0) * 1000)
        report.rows.append(BenchmarkRow(run.family, prov="off", repetition=rep, exec_time_ms=off_times[-1],
                                        graph_nodes=0, graph_edges=0, build_time_ms=0.0,
                                        mean_dependency_fraction=math.nan, **desc))
    base = statistics.fmean(off_times)
    for rep in range(repetitions):
        t0 = time.perf_counter()
        log = run.run(provenance=True)
        elapsed = (time.perf_counter() - t0) * 1000
        frac = math.nan
        if dependencies and rep == 0:
            fractions = output_dependency_fractions(log)
            frac = statistics.fmean(fractions) if fractions else math.nan
        report.rows.append(BenchmarkRow(run.family, prov="on", repetition=rep, exec_time_ms=elapsed,
                                        graph_nodes=len(log.graph), graph_edges=log.graph.edge_count,
                                        build_time_ms=max(0.0, elapsed - base), mean_dependency_fraction=frac,
                                        **desc))
    return report
