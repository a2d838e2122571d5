"""Discovery, routing, invocation and host-state contract tests."""

import threading

import numpy as np
import pytest

import psychoforge.modules.builtin  # noqa: F401 - registers bundled handlers
from psychoforge.dataset import InvalidDatasetError, ResponseDataset
from psychoforge.modules import (
    HANDLER_TABLE,
    Absence,
    HostContext,
    NotFoundError,
    UnavailableError,
    default_registry,
    discover,
    invoke,
    rediscover,
    register_handler,
    route_category,
)
from psychoforge.modules.registry import ModuleManifest

MANIFEST = """\
cat:
  title: CAT Example
  category: Modules
  binding:
    ui: sm_cat_ui
    server: sm_cat_server
"""


def write_package(root, dirname, package=None, manifest=MANIFEST, flagged=True):
    pkg = root / dirname
    pkg.mkdir(parents=True)
    flag = "sia-module: true\n" if flagged else ""
    (pkg / "PACKAGE.meta").write_text(f"package: {package or dirname}\n{flag}")
    if manifest is not None:
        (pkg / "modules.yml").write_text(manifest)
    return pkg


@pytest.fixture
def handlers():
    """Register throwaway handlers for the synthetic sm package."""
    added = []

    def add(name, fn):
        HANDLER_TABLE[name] = fn
        added.append(name)

    add("sm_cat_ui", lambda mid, ctx: {"module": mid, "form": []})
    add("sm_cat_server", lambda mid, ctx, req: {"module": mid, "panels": []})
    yield add
    for name in added:
        HANDLER_TABLE.pop(name, None)


def make_binary_dataset(n=120, m=8, seed=5):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=n)
    b = np.linspace(-1.5, 1.5, m)
    p = 1.0 / (1.0 + np.exp(-(theta[:, None] - b[None, :])))
    resp = (rng.random((n, m)) < p).astype(int).astype(object)
    return ResponseDataset(
        responses=resp,
        item_names=tuple(f"q{i}" for i in range(m)),
        item_types=("binary",) * m,
        key=(None,) * m,
        max_score=(1,) * m,
        group=(theta > 0).astype(float),
    )


class TestDiscovery:
    def test_golden_package(self, tmp_path, handlers):
        write_package(tmp_path, "sm")
        reg = discover([tmp_path])
        assert len(reg) == 1
        entry = reg.get("sm_cat")
        assert entry.available
        assert entry.routed_category == "Modules"
        assert entry.manifest.title == "CAT Example"
        assert reg.diagnostics == ()

    def test_empty_root(self, tmp_path):
        assert len(discover([tmp_path])) == 0

    def test_missing_root_warns_and_skips(self, tmp_path):
        with pytest.warns(UserWarning, match="does not exist"):
            reg = discover([tmp_path / "nope"])
        assert len(reg) == 0
        assert any("does not exist" in d for d in reg.diagnostics)

    def test_unflagged_package_ignored(self, tmp_path, handlers):
        write_package(tmp_path, "sm", flagged=False)
        assert len(discover([tmp_path])) == 0

    def test_flagged_without_manifest_diagnosed(self, tmp_path):
        write_package(tmp_path, "sm", manifest=None)
        reg = discover([tmp_path])
        assert len(reg) == 0
        assert any("no modules.yml" in d for d in reg.diagnostics)

    @pytest.mark.parametrize(
        "drop, expect",
        [
            ("title: CAT Example", "title"),
            ("category: Modules", "category"),
            ("ui: sm_cat_ui", "binding.ui"),
            ("server: sm_cat_server", "binding.server"),
        ],
    )
    def test_each_required_field_removed(self, tmp_path, handlers, drop, expect):
        broken = "\n".join(l for l in MANIFEST.splitlines() if drop not in l) + "\n"
        write_package(tmp_path, "sm", manifest=broken)
        entry = discover([tmp_path]).get("sm_cat")
        assert not entry.available
        assert expect in entry.diagnostic

    def test_unresolved_handler_named(self, tmp_path, handlers):
        write_package(tmp_path, "sm", manifest=MANIFEST.replace("sm_cat_server", "gone"))
        entry = discover([tmp_path]).get("sm_cat")
        assert not entry.available
        assert "gone" in entry.diagnostic

    def test_unknown_category_routed_to_fallback(self, tmp_path, handlers):
        write_package(tmp_path, "sm", manifest=MANIFEST.replace("Modules", "Frobnication"))
        entry = discover([tmp_path]).get("sm_cat")
        assert entry.available
        assert entry.manifest.category == "Frobnication"
        assert entry.routed_category == "Modules"

    def test_known_category_kept(self, tmp_path, handlers):
        write_package(tmp_path, "sm", manifest=MANIFEST.replace("Modules", "IRT models"))
        assert discover([tmp_path]).get("sm_cat").routed_category == "IRT models"

    def test_duplicate_id_later_rejected(self, tmp_path, handlers):
        write_package(tmp_path / "r1", "aaa", package="sm")
        write_package(tmp_path / "r2", "bbb", package="sm")
        reg = discover([tmp_path / "r1", tmp_path / "r2"])
        assert len(reg) == 1
        assert "aaa" in reg.get("sm_cat").manifest.source_path
        assert any("duplicate module id" in d for d in reg.diagnostics)

    def test_corrupt_manifest_diagnosed_not_fatal(self, tmp_path, handlers):
        write_package(tmp_path, "ok", package="sm")
        write_package(tmp_path, "bad", manifest="m: value-at-top-level\n")
        reg = discover([tmp_path])
        assert len(reg) == 1
        assert any("module names" in d for d in reg.diagnostics)

    def test_ordering_canonical_by_id(self, tmp_path, handlers):
        write_package(tmp_path, "zz", package="zz", manifest=MANIFEST)
        write_package(tmp_path, "aa", package="aa", manifest=MANIFEST)
        reg = discover([tmp_path])
        assert list(reg.modules) == ["aa_cat", "zz_cat"]

    def test_discovery_deterministic(self, tmp_path, handlers):
        write_package(tmp_path, "sm")
        assert discover([tmp_path]) == discover([tmp_path])


class TestRediscover:
    def test_dropped_in_manifest_appears(self, tmp_path, handlers):
        reg = discover([tmp_path])
        assert len(reg) == 0
        write_package(tmp_path, "sm")
        reg2 = rediscover(reg)
        assert reg2.get("sm_cat").available

    def test_removed_manifest_drops_out(self, tmp_path, handlers):
        pkg = write_package(tmp_path, "sm")
        reg = discover([tmp_path])
        (pkg / "modules.yml").unlink()
        (pkg / "PACKAGE.meta").unlink()
        pkg.rmdir()
        assert len(rediscover(reg)) == 0

    def test_no_change_is_idempotent(self, tmp_path, handlers):
        write_package(tmp_path, "sm")
        reg = discover([tmp_path])
        assert rediscover(reg) == reg

    def test_corrupt_manifest_preserves_previous_entries(self, tmp_path, handlers):
        pkg = write_package(tmp_path, "sm")
        reg = discover([tmp_path])
        (pkg / "modules.yml").write_text("m:\n\ttitle: broken\n")
        reg2 = rediscover(reg)
        assert reg2.get("sm_cat") == reg.get("sm_cat")
        assert any("keeping 1 previously discovered entry" in d for d in reg2.diagnostics)


class TestRouting:
    def make(self, category):
        return ModuleManifest(
            id="x_y", package="x", module="y", title="t",
            category=category, ui_binding="u", server_binding="s", source_path="p",
        )

    def test_known_categories(self):
        for cat in ("Scores", "Validity", "Reliability", "Item analysis",
                    "Regression", "IRT models", "DIF/Fairness"):
            assert route_category(self.make(cat)) == cat

    def test_unknown_category(self):
        assert route_category(self.make("Frobnication")) == "Modules"

    def test_empty_category(self):
        assert route_category(self.make("")) == "Modules"


class TestInvoke:
    def test_unknown_id(self):
        reg = default_registry()
        with pytest.raises(NotFoundError):
            invoke(reg, "nope", HostContext())

    def test_unavailable_module_raises_with_diagnostic(self, tmp_path, handlers):
        write_package(tmp_path, "sm", manifest=MANIFEST.replace("sm_cat_server", "gone"))
        reg = discover([tmp_path])
        with pytest.raises(UnavailableError, match="gone"):
            invoke(reg, "sm_cat", HostContext())

    def test_handler_exception_becomes_error_panel(self, tmp_path, handlers):
        def boom(mid, ctx, req):
            raise RuntimeError("kaput")

        handlers("sm_cat_server", boom)
        write_package(tmp_path, "sm")
        reg = discover([tmp_path])
        doc = invoke(reg, "sm_cat", HostContext())
        assert doc["panels"][0]["kind"] == "error"
        assert "kaput" in doc["panels"][0]["message"]

    def test_handler_without_panels_becomes_error(self, tmp_path, handlers):
        handlers("sm_cat_server", lambda mid, ctx, req: 42)
        write_package(tmp_path, "sm")
        doc = invoke(discover([tmp_path]), "sm_cat", HostContext())
        assert doc["panels"][0]["kind"] == "error"

    def test_failing_module_never_corrupts_host(self, tmp_path, handlers):
        def boom(mid, ctx, req):
            raise RuntimeError("kaput")

        handlers("sm_cat_server", boom)
        write_package(tmp_path, "sm")
        reg = discover([tmp_path])
        ctx = HostContext(dataset=make_binary_dataset())
        before = ctx.resource("totals").values.copy()
        for _ in range(3):
            invoke(reg, "sm_cat", ctx, {})
        after = ctx.resource("totals").values
        assert np.array_equal(before, after)
        assert ctx.compute_counts()["totals"] == 1


class TestBundledModules:
    def test_bundled_registry_contents(self):
        reg = default_registry()
        grouped = reg.by_category()
        assert any(e.manifest.id == "cat_example" for e in grouped["Modules"])
        assert any(e.manifest.id == "dif_c" for e in grouped["DIF/Fairness"])

    def test_cat_example_with_example_model(self):
        reg = default_registry()
        doc = invoke(reg, "cat_example", HostContext(), {"true_theta": 1.0, "seed": 3})
        kinds = [p["kind"] for p in doc["panels"]]
        assert kinds == ["text", "curves", "table"]

    def test_cat_example_host_model_absent(self):
        reg = default_registry()
        ctx = HostContext()
        doc = invoke(reg, "cat_example", ctx, {"model": "host"})
        assert doc["panels"][0]["kind"] == "error"
        assert "no dataset" in doc["panels"][0]["message"]
        # the failure stays module-scoped
        assert isinstance(ctx.resource("dataset"), Absence)

    def test_cat_example_host_model_present(self):
        reg = default_registry()
        ctx = HostContext(dataset=make_binary_dataset())
        doc = invoke(reg, "cat_example", ctx, {"model": "host", "seed": 2})
        assert doc["panels"][0]["kind"] == "text"
        table = doc["panels"][2]
        assert set(r[0] for r in table["rows"]) <= {f"q{i}" for i in range(8)}

    def test_dif_c_on_published_dataset(self):
        reg = default_registry()
        ctx = HostContext(dataset=make_binary_dataset())
        doc = invoke(reg, "dif_c", ctx, {"test": "both"})
        assert doc["panels"][0]["kind"] == "text"
        assert len(doc["panels"][1]["rows"]) == 8


class TestHostContext:
    def test_unknown_resource_rejected(self):
        with pytest.raises(KeyError):
            HostContext().resource("clock")

    def test_absent_resources_are_typed(self):
        ctx = HostContext()
        for name in ("dataset", "scored", "totals", "irt_binary_model", "group"):
            value = ctx.resource(name)
            assert isinstance(value, Absence)
            assert value.reason

    def test_missing_columns_are_absent(self):
        ds = make_binary_dataset()
        ctx = HostContext(dataset=ds)
        assert not isinstance(ctx.resource("group"), Absence)
        assert isinstance(ctx.resource("criterion"), Absence)
        assert "criterion" in ctx.resource("criterion").reason

    def test_lazy_resources_compute_once(self):
        ctx = HostContext(dataset=make_binary_dataset())
        for _ in range(4):
            ctx.resource("totals")
        counts = ctx.compute_counts()
        assert counts["totals"] == 1
        assert counts["scored"] == 1

    def test_concurrent_first_access_computes_once(self):
        ctx = HostContext(dataset=make_binary_dataset())
        barrier = threading.Barrier(8)

        def fetch():
            barrier.wait()
            ctx.resource("totals")

        threads = [threading.Thread(target=fetch) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert ctx.compute_counts()["totals"] == 1

    def test_publish_swaps_and_flushes(self):
        ctx = HostContext(dataset=make_binary_dataset(seed=1))
        first = ctx.resource("totals").values.copy()
        ack = ctx.publish_dataset(make_binary_dataset(seed=2))
        assert ack["ok"] and ack["persons"] == 120
        second = ctx.resource("totals").values
        assert not np.array_equal(first, second)
        assert ctx.compute_counts()["totals"] == 2

    def test_publish_identical_recomputes_identically(self):
        ctx = HostContext(dataset=make_binary_dataset(seed=3))
        first = ctx.resource("totals").values.copy()
        ctx.publish_dataset(make_binary_dataset(seed=3))
        assert np.array_equal(first, ctx.resource("totals").values)
        assert ctx.compute_counts()["totals"] == 2

    def test_publish_invalid_keeps_old_state(self):
        ctx = HostContext(dataset=make_binary_dataset(seed=4))
        keep = ctx.resource("totals").values.copy()
        with pytest.raises(InvalidDatasetError):
            ctx.publish_dataset("not a dataset")
        assert np.array_equal(keep, ctx.resource("totals").values)
        assert ctx.compute_counts()["totals"] == 1

    def test_binary_model_requires_two_binary_items(self):
        ds = make_binary_dataset(m=8)
        one = ResponseDataset(
            responses=ds.responses[:, :1],
            item_names=ds.item_names[:1],
            item_types=ds.item_types[:1],
            key=ds.key[:1],
            max_score=ds.max_score[:1],
        )
        ctx = HostContext(dataset=one)
        model = ctx.resource("irt_binary_model")
        assert isinstance(model, Absence)
        assert "binary items" in model.reason

    def test_binary_model_fits_and_caches(self):
        ctx = HostContext(dataset=make_binary_dataset())
        model = ctx.resource("irt_binary_model")
        assert not isinstance(model, Absence)
        assert len(model.items) == 8
        ctx.resource("irt_binary_model")
        assert ctx.compute_counts()["irt_binary_model"] == 1
