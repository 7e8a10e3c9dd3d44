#!/usr/bin/env python3
"""Regenerates the bundled fixture corpus under fixtures/.

The output is deterministic. Stage counts the corpus is built to produce:
60 resources, 41 datasets, 18 with two or more quasi-identifiers under the
built-in dictionary, 11 labeled human-subject (6 individual, 5 aggregate).
"""

import csv
import json
import random
import shutil
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"
SNAPSHOT = "2024-04-15T00:00:00Z"
LABELED_AT = "2024-05-01T12:00:00Z"

# Built-in dictionary quasi-identifiers (after synonym resolution). Used only
# for the sanity assertions at the bottom.
QIS = {
    "age", "sex", "race", "age group", "ethnicity", "date of birth", "zip code",
    "location", "neighborhood", "neighborhoodxy", "victim age", "victim gender",
    "victim race", "offender age", "offender gender", "offender race",
    "marital status", "language",
}
SYNONYMS = {"gender": "sex", "dob": "date of birth", "birth date": "date of birth",
            "zip": "zip code", "zipcode": "zip code", "postal code": "zip code"}

rng = random.Random(20240415)

NUMERIC = {"age", "victim age", "offender age", "wattage", "acres", "miles",
           "length", "amount", "total", "count", "attendees", "score", "rate",
           "fine", "valuation", "kbtu", "rating", "model year", "year built",
           "fiscal year", "year"}
DATES = {"arrest date", "citation date", "occurred date", "intake date", "date",
         "inspection date"}


def col(name):
    if name in NUMERIC:
        kind = "number"
    elif name in DATES:
        kind = "calendar_date"
    else:
        kind = "text"
    return {"name": name, "type": kind}


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def date(year, month=None, day=None, hour=None):
    month = month or rng.randint(1, 12)
    day = day or rng.randint(1, 28)
    hour = rng.randint(0, 23) if hour is None else hour
    return f"{year}-{month:02d}-{day:02d}T{hour:02d}:00:00"


# ---------------------------------------------------------------- police data

STREETS = ["Tchoupitoulas St", "Dinkins St", "Magazine St", "Canal St", "Elysian Fields Ave",
           "St Claude Ave", "Chef Menteur Hwy", "Bourbon St", "Claiborne Ave", "Carrollton Ave",
           "Gentilly Blvd", "Napoleon Ave", "Broad St", "Esplanade Ave", "Freret St"]
RACES = ["BLACK", "WHITE", "HISPANIC", "ASIAN", "UNKNOWN"]
GENDERS = ["MALE", "FEMALE", "UNKNOWN"]
SIGNALS = ["THEFT", "SIMPLE BATTERY", "BURGLARY", "AUTO THEFT", "SIMPLE ROBBERY",
           "ARMED ROBBERY WITH GUN", "CRIMINAL DAMAGE", "DOMESTIC DISTURBANCE"]
EPR_HEADER = ["item number", "occurred date", "signal description", "victim age",
              "victim gender", "victim race", "offender age", "offender gender",
              "location", "disposition"]


def epr_location(year_band):
    # House-number bands never overlap between years, so the only location
    # collisions across years are the planted shared incidents.
    hundred = rng.randint(100 * (year_band + 1), 100 * (year_band + 1) + 99)
    return f"{hundred}XX {rng.choice(STREETS)}"


def epr_row(year, idx, band):
    offender_known = rng.random() > 0.15
    return [
        f"{'ABC'[year - 2014]}-{idx:05d}-{year % 100:02d}",
        date(year),
        rng.choice(SIGNALS),
        str(rng.randint(12, 85)),
        rng.choice(GENDERS[:2]),
        rng.choice(RACES),
        str(rng.randint(14, 70)) if offender_known else "",
        rng.choice(GENDERS[:2]) if offender_known else "",
        epr_location(band),
        rng.choice(["CLOSED", "CLOSED", "CLOSED", "OPEN"]),
    ]


def police_tables():
    epr14 = [epr_row(2014, i, 0) for i in range(1, 41)]
    epr15 = [epr_row(2015, i, 1) for i in range(1, 61)]
    epr16 = [epr_row(2016, i, 2) for i in range(1, 61)]

    # Incidents that surface in both years. Each tuple is
    # (victim age, victim gender, victim race, offender age, offender gender,
    #  location, 2015 signal, 2015 disposition, 2016 signal, 2016 disposition,
    #  copies in 2016).
    shared = [
        ("16", "FEMALE", "BLACK", "16", "FEMALE", "85XX Dinkins St",
         "RUNAWAY JUVENILE", "OPEN", "RUNAWAY JUVENILE", "CLOSED", 1),
        ("29", "MALE", "WHITE", "23", "MALE", "6XX Tchoupitoulas St",
         "ATTEMPTED ARMED ROBBERY WITH GUN", "CLOSED", "ATTEMPTED SIMPLE ROBBERY", "CLOSED", 1),
        ("41", "FEMALE", "WHITE", "38", "MALE", "31XX Magazine St",
         "SIMPLE BATTERY", "CLOSED", "SIMPLE BATTERY", "CLOSED", 2),
        ("33", "MALE", "BLACK", "19", "MALE", "12XX St Claude Ave",
         "THEFT", "CLOSED", "THEFT", "CLOSED", 1),
        ("52", "FEMALE", "HISPANIC", "27", "FEMALE", "44XX Canal St",
         "CRIMINAL DAMAGE", "CLOSED", "CRIMINAL DAMAGE", "CLOSED", 1),
        ("24", "MALE", "BLACK", "24", "MALE", "19XX Claiborne Ave",
         "DOMESTIC DISTURBANCE", "CLOSED", "SIMPLE BATTERY", "CLOSED", 2),
        ("67", "MALE", "ASIAN", "31", "MALE", "7XX Bourbon St",
         "THEFT", "CLOSED", "THEFT", "CLOSED", 1),
        ("45", "FEMALE", "BLACK", "45", "MALE", "22XX Gentilly Blvd",
         "DOMESTIC DISTURBANCE", "CLOSED", "DOMESTIC DISTURBANCE", "CLOSED", 1),
    ]
    for n, s in enumerate(shared):
        va, vg, vr, oa, og, loc, sig15, d15, sig16, d16, copies = s
        epr15[n * 7][2:] = [sig15, va, vg, vr, oa, og, loc, d15]
        if n == 0:
            epr15[n * 7][1] = "2015-02-24T11:00:00"
        for c in range(copies):
            row = epr16[n * 7 + c]
            row[2:] = [sig16, va, vg, vr, oa, og, loc, d16]
            if n == 0:
                row[1] = "2016-12-05T09:00:00"
    # The runaway incident is the only 2015 record that is open.
    for i, row in enumerate(epr15):
        if i != 0 and row[9] == "OPEN":
            row[9] = "CLOSED"
    return epr14, epr15, epr16


AGG_HEADER = ["year", "victim age", "victim gender", "victim race", "offender age",
              "offender gender", "location", "count"]
AGE_BANDS = ["0-17", "18-24", "25-34", "35-44", "45-54", "55-64", "65+"]
DISTRICTS = [f"DISTRICT {i}" for i in range(1, 9)]


def aggregate_rows(year, n):
    return [[str(year), rng.choice(AGE_BANDS), rng.choice(GENDERS), rng.choice(RACES),
             rng.choice(AGE_BANDS), rng.choice(GENDERS), rng.choice(DISTRICTS),
             str(rng.randint(1, 400))] for _ in range(n)]


# ---------------------------------------------------------------- fort lauderdale

FL_PLACES = ["Coral Ridge Country Club Estate", "NW 10th Ave", "N Federal Hwy",
             "Las Olas Blvd", "NW 8th St", "Sunrise Blvd", "SE 17th St", "Broward Blvd"]
FL_RACES = ["B", "W", "A", "U"]
CHARGES = ["LARCENY", "MOTOR VEHICLE THEFT", "POSSESSION OF CANNABIS OVER 20 GRAMS",
           "BURGLARY", "TRESPASS", "BATTERY"]
VIOLATIONS = ["DISOBEY RED LIGHT", "DISOBEY STOP/YIELD SIGN", "DWLS", "SPEEDING",
              "NO PROOF OF INSURANCE"]


def fl_tables():
    juvenile, adult, citations = [], [], []
    for i in range(30):
        juvenile.append([f"18-{rng.randint(100000, 199999)}", date(2018), str(rng.randint(12, 17)),
                         rng.choice(FL_RACES), rng.choice("MF"), rng.choice(CHARGES),
                         rng.choice(FL_PLACES)])
    for i in range(40):
        adult.append([f"21-{rng.randint(200000, 299999)}", date(2021), str(rng.randint(18, 70)),
                      rng.choice(FL_RACES), rng.choice("MF"), rng.choice(CHARGES),
                      rng.choice(FL_PLACES)])
    for i in range(35):
        citations.append([f"15-{rng.randint(300000, 399999)}", date(2015), str(rng.randint(16, 70)),
                          rng.choice(FL_RACES), rng.choice("MF"), rng.choice(VIOLATIONS),
                          rng.choice(FL_PLACES)])
    # Shared incidents linked by case id.
    juvenile[0] = ["18-030101", "2018-03-10T00:00:00", "16", "W", "M", "LARCENY",
                   "Coral Ridge Country Club Estate"]
    adult[0] = ["18-030101", "2018-03-10T00:00:00", "20", "W", "M", "LARCENY",
                "Coral Ridge Country Club Estate"]
    adult[1] = ["21-092701", "2021-09-27T00:00:00", "26", "B", "M", "LARCENY", "NW 10th Ave"]
    citations[0] = ["21-092701", "2021-09-27T00:00:00", "26", "B", "M",
                    "DISOBEY STOP/YIELD SIGN", "NW 8th St"]
    juvenile[1] = ["15-080601", "2015-08-06T00:00:00", "16", "W", "M",
                   "POSSESSION OF CANNABIS OVER 20 GRAMS", "N Federal Hwy"]
    citations[1] = ["15-080601", "2015-07-30T00:00:00", "16", "W", "M", "DISOBEY RED LIGHT",
                    "N Federal Hwy"]
    return juvenile, adult, citations


# ---------------------------------------------------------------- filler data

def filler(header, n):
    rows = []
    for i in range(n):
        row = []
        for h in header:
            if h.endswith(" id") or h.endswith(" number"):
                row.append(f"{h.split()[0][:3].upper()}-{i + 1:04d}")
            elif h in NUMERIC:
                row.append(str(rng.randint(1, 120)))
            elif h in DATES:
                row.append(date(rng.randint(2015, 2022)))
            elif h == "location":
                row.append(f"{rng.randint(1, 99)}XX {rng.choice(STREETS)}")
            elif h in ("zip code", "zip"):
                row.append(str(rng.randint(70112, 70131)))
            elif h == "sex":
                row.append(rng.choice("MF"))
            else:
                row.append(f"{h} {rng.randint(1, 12)}")
        rows.append(row)
    return rows


# ---------------------------------------------------------------- portals


def dataset(id, title, columns, rows=None, n=12, description=""):
    return {"id": id, "title": title, "asset_type": "dataset", "columns": columns,
            "rows": rows if rows is not None else filler(columns, n), "description": description}


def other(id, title, asset_type):
    return {"id": id, "title": title, "asset_type": asset_type}


def build_portals():
    epr14, epr15, epr16 = police_tables()
    juvenile, adult, citations = fl_tables()
    fl_cols = ["case id", "arrest date", "age", "race", "sex", "charge", "location"]
    cit_cols = ["case id", "citation date", "age", "race", "sex", "violation", "location"]
    return [
        ("nola.example", "New Orleans Open Data", [
            dataset("epr-2014", "Electronic Police Report 2014", EPR_HEADER, epr14),
            dataset("epr-2015", "Electronic Police Report 2015", EPR_HEADER, epr15),
            dataset("epr-2016", "Electronic Police Report 2016", EPR_HEADER, epr16),
            dataset("cfs-summary-2015", "Calls for Service Summary 2015", AGG_HEADER,
                    aggregate_rows(2015, 30)),
            dataset("victim-demographics-2015", "Victim Demographics 2015", AGG_HEADER,
                    aggregate_rows(2015, 25)),
            dataset("victim-demographics-2016", "Victim Demographics 2016", AGG_HEADER,
                    aggregate_rows(2016, 25)),
            dataset("offender-demographics-2016", "Offender Demographics 2016", AGG_HEADER,
                    aggregate_rows(2016, 25)),
            dataset("district-summary-2014", "District Incident Summary 2014", AGG_HEADER,
                    aggregate_rows(2014, 20)),
            other("police-districts", "Police Districts", "map"),
            other("epr-dictionary", "Electronic Police Report Data Dictionary", "data-dictionary"),
        ]),
        ("ft-laud.example", "Fort Lauderdale Police Open Data", [
            dataset("juvenile-arrests", "Juvenile Arrests", fl_cols, juvenile),
            dataset("adult-arrests", "Adult Arrests", fl_cols, adult),
            dataset("citations", "Citations", cit_cols, citations),
            dataset("parking-meters", "Parking Meters", ["meter id", "location", "rate"]),
            dataset("building-permits", "Building Permits",
                    ["permit number", "address", "zip code", "valuation"]),
            other("patrol-zones", "Patrol Zones", "map"),
            other("arrests-dictionary", "Arrests Data Dictionary", "data-dictionary"),
        ]),
        ("sm-county.example", "County Datahub", [
            dataset("building-details", "Building Details",
                    ["building id", "age", "location", "zip code", "year built"]),
            dataset("restaurant-inspections", "Restaurant Inspections",
                    ["facility", "location", "zip code", "inspection date", "score"]),
            dataset("county-budget", "County Budget", ["fund", "department", "amount"]),
            other("facilities-map", "County Facilities", "map"),
            other("datahub-overview", "About the Datahub", "story"),
        ]),
        ("albany.example", "Albany Open Data", [
            dataset("tree-census", "Street Tree Census", ["tree id", "age", "location", "species"]),
            dataset("street-segments", "Street Segments",
                    ["segment id", "location", "zip code", "length"]),
            dataset("parking-tickets", "Parking Tickets", ["ticket number", "location", "fine"]),
            other("zoning", "Zoning Districts", "map"),
            other("tickets-by-month", "Tickets by Month", "chart"),
        ]),
        ("austin.example", "Austin Open Data", [
            dataset("animal-shelter-intakes", "Animal Shelter Intakes",
                    ["animal id", "age", "sex", "breed", "intake date"]),
            dataset("library-program-attendance", "Library Program Attendance",
                    ["branch", "age group", "language", "attendees"]),
            dataset("bus-stops", "Bus Stops", ["stop id", "location"]),
            other("transit-map", "Transit Routes", "map"),
        ]),
        ("boulder.example", "Boulder Open Data", [
            dataset("stray-livestock", "Stray Livestock Reports",
                    ["report number", "species", "age", "sex", "location"]),
            dataset("snow-plow-routes", "Snow Plow Routes", ["route id", "miles"]),
            dataset("open-space-trails", "Open Space Trails", ["trail name", "length"]),
            other("trails-map", "Trail Map", "map"),
            other("annual-report", "Annual Report", "file"),
        ]),
        ("dallas.example", "Dallas Open Data", [
            dataset("street-lamps", "Street Lamps", ["street lamp id", "wattage", "location"], n=200),
            dataset("water-main-breaks", "Water Main Breaks", ["break id", "date", "location"]),
            dataset("payroll-summary", "City Payroll Summary", ["department", "fiscal year", "total"]),
            other("council-districts", "Council Districts", "map"),
            other("lamps-dictionary", "Street Lamp Data Dictionary", "data-dictionary"),
        ]),
        ("kc.example", "Kansas City Open Data", [
            dataset("pothole-reports", "Pothole Reports", ["report id", "location", "status"]),
            dataset("service-requests", "311 Service Requests", ["request id", "type", "zip code"]),
            dataset("kc-budget", "Adopted Budget", ["fund", "department", "amount"]),
            other("service-dictionary", "311 Data Dictionary", "data-dictionary"),
        ]),
        ("seattle.example", "Seattle Open Data", [
            dataset("bike-counts", "Bike Counter Totals", ["counter id", "date", "count"]),
            dataset("parks", "Parks", ["park name", "acres", "location"]),
            other("park-boundaries", "Park Boundaries", "map"),
            other("bike-trends", "Bike Trends", "chart"),
        ]),
        ("denver.example", "Denver Open Data", [
            dataset("liquor-licenses", "Liquor Licenses", ["license id", "business", "location"]),
            dataset("traffic-signals", "Traffic Signals", ["signal id", "location"]),
            dataset("tree-permits", "Tree Removal Permits", ["permit id", "species"]),
            other("permits-handbook", "Permits Handbook", "file"),
        ]),
        ("chicago.example", "Chicago Data Portal", [
            dataset("bridge-inspections", "Bridge Inspections", ["bridge id", "rating", "location"]),
            dataset("fleet-vehicles", "Fleet Vehicles", ["vehicle id", "make", "model year"]),
            other("ward-map", "Ward Boundaries", "map"),
        ]),
        ("nyc.example", "NYC Open Data", [
            dataset("taxi-zones", "Taxi Zones", ["zone id", "borough", "zone"]),
            dataset("energy-benchmarks", "Energy Benchmarks", ["building id", "kbtu", "zip code"]),
            dataset("school-locations", "School Locations", ["school id", "location"]),
            other("open-data-story", "Open Data Week", "story"),
        ]),
    ]


LABELS = {
    "nola.example:epr-2014": ("human-subject", "individual-record"),
    "nola.example:epr-2015": ("human-subject", "individual-record"),
    "nola.example:epr-2016": ("human-subject", "individual-record"),
    "nola.example:cfs-summary-2015": ("human-subject", "aggregate"),
    "nola.example:victim-demographics-2015": ("human-subject", "aggregate"),
    "nola.example:victim-demographics-2016": ("human-subject", "aggregate"),
    "nola.example:offender-demographics-2016": ("human-subject", "aggregate"),
    "nola.example:district-summary-2014": ("human-subject", "aggregate"),
    "ft-laud.example:juvenile-arrests": ("human-subject", "individual-record"),
    "ft-laud.example:adult-arrests": ("human-subject", "individual-record"),
    "ft-laud.example:citations": ("human-subject", "individual-record"),
    "sm-county.example:building-details": ("non-human", "unknown"),
    "sm-county.example:restaurant-inspections": ("non-human", "unknown"),
    "albany.example:tree-census": ("non-human", "unknown"),
    "albany.example:street-segments": ("non-human", "unknown"),
    "austin.example:animal-shelter-intakes": ("non-human", "unknown"),
    "boulder.example:stray-livestock": ("non-human", "unknown"),
    # austin.example:library-program-attendance stays undecided.
}


def canonical(name):
    return SYNONYMS.get(name, name)


def write_corpus():
    portals_dir = ROOT / "portals"
    if portals_dir.exists():
        shutil.rmtree(portals_dir)
    totals = {"resources": 0, "tabular": 0, "qi": 0}
    qi_keys = []
    for domain, display, items in build_portals():
        catalog_items = []
        for item in items:
            totals["resources"] += 1
            entry = {"id": item["id"], "title": item["title"],
                     "description": item.get("description", ""),
                     "asset_type": item["asset_type"]}
            if item["asset_type"] == "dataset":
                totals["tabular"] += 1
                cols = item["columns"]
                rows = item["rows"]
                assert all(len(r) == len(cols) for r in rows), item["id"]
                entry["row_count"] = len(rows)
                entry["columns"] = [col(c) for c in cols]
                write_csv(portals_dir / domain / "data" / f"{item['id']}.csv", cols, rows)
                hits = {canonical(c) for c in cols} & QIS
                if len(hits) >= 2:
                    totals["qi"] += 1
                    qi_keys.append(f"{domain}:{item['id']}")
            catalog_items.append(entry)
        doc = {"domain": domain, "display_name": display, "snapshot": SNAPSHOT,
               "items": catalog_items}
        (portals_dir / domain).mkdir(parents=True, exist_ok=True)
        with open(portals_dir / domain / "catalog.json", "w") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    assert totals == {"resources": 60, "tabular": 41, "qi": 18}, totals
    assert set(LABELS) <= set(qi_keys), set(LABELS) - set(qi_keys)
    labels = [{"dataset": k, "relevance": r, "granularity": g, "labeled_at": LABELED_AT}
              for k, (r, g) in sorted(LABELS.items())]
    with open(ROOT / "labels.json", "w") as f:
        json.dump(labels, f, indent=2)
        f.write("\n")
    human = [v for v in LABELS.values() if v[0] == "human-subject"]
    assert len(human) == 11
    assert sum(1 for v in human if v[1] == "individual-record") == 6


if __name__ == "__main__":
    write_corpus()
