#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "kinetica/error.hpp"
#include "kinetica/eval.hpp"
#include "support.hpp"

using namespace kinetica;

namespace {

const Roi kTarget{"t", {0, 1}};
const std::vector<Roi> kBack{{"b1", {2, 3}}, {"b2", {4, 5}}};

std::vector<std::span<const double>> spans(const std::vector<std::vector<double>>& v) {
    std::vector<std::span<const double>> out;
    for (const auto& x : v) out.emplace_back(x);
    return out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("roi mean and population std") {
    const std::vector<double> img{1, 3, 5, 7};
    CHECK(roi_mean(img, {"a", {0, 1, 2, 3}}) == doctest::Approx(4.0));
    CHECK(roi_std(img, {"a", {0, 1, 2, 3}}) == doctest::Approx(std::sqrt(5.0)));
    CHECK_THROWS_AS(roi_mean(img, {"e", {}}), ValidationError);
    CHECK_THROWS_AS(roi_mean(img, {"o", {4}}), ValidationError);
}

TEST_CASE("crc and std") {
    const std::vector<double> truth{3, 3, 1, 1, 1, 1};

    SUBCASE("perfect ensemble") {
        std::vector<std::vector<double>> ens(4, truth);
        auto r = crc_std(spans(ens), truth, kTarget, kBack);
        CHECK(r.crc == doctest::Approx(1.0));
        CHECK(r.std == 0.0);
    }
    SUBCASE("three realizations by hand") {
        std::vector<std::vector<double>> ens{{4, 4, 1, 1, 1, 1}, {2, 2, 2, 2, 1, 1}, {3, 3, 1, 1, 2, 2}};
        auto r = crc_std(spans(ens), truth, kTarget, kBack);
        CHECK(r.crc == doctest::Approx(13.0 / 18.0).epsilon(1e-14));
        CHECK(r.std == doctest::Approx(std::sqrt(2.0) / 4.0).epsilon(1e-14));

        // global scale leaves both unchanged; an additive shift moves CRC only
        auto scaled = ens;
        for (auto& x : scaled)
            for (auto& v : x) v *= 7.5;
        auto s = crc_std(spans(scaled), truth, kTarget, kBack);
        CHECK(s.crc == doctest::Approx(r.crc).epsilon(1e-13));
        CHECK(s.std == doctest::Approx(r.std).epsilon(1e-13));
    }
    SUBCASE("errors") {
        std::vector<std::vector<double>> one{truth};
        CHECK_THROWS_AS(crc_std(spans(one), truth, kTarget, kBack), ValidationError);
        std::vector<std::vector<double>> two(2, truth);
        const std::vector<double> flat(6, 1.0);
        CHECK_THROWS_AS(crc_std(spans(two), flat, kTarget, kBack), DomainError);
        CHECK_THROWS_AS(crc_std(spans(two), truth, kTarget, {}), ValidationError);
    }
}

TEST_CASE("cnr") {
    const std::vector<double> img{5, 7, 1, 3, 2, 4};
    CHECK(background_noise(img, kBack) == doctest::Approx(1.0));
    auto c = cnr(img, {kTarget}, kBack);
    REQUIRE(c.size() == 1);
    CHECK(c[0] == doctest::Approx(3.5));

    // shift invariance
    auto shifted = img;
    for (auto& v : shifted) v += 11.0;
    CHECK(cnr(shifted, {kTarget}, kBack)[0] == doctest::Approx(3.5));

    const std::vector<double> same{2, 2, 1, 3, 2, 2};
    CHECK(cnr(same, {{"c", {0, 1}}}, {{"b", {2, 3}}})[0] == doctest::Approx(0.0));

    const std::vector<double> flat(6, 2.0);
    CHECK(std::isinf(cnr(flat, {kTarget}, kBack)[0]));
    CHECK_THROWS_AS(cnr(img, {}, kBack), ValidationError);
}

TEST_CASE("uptake versus noise") {
    std::vector<std::pair<int, std::vector<double>>> cps{{10, {5, 7, 1, 3, 2, 4}}, {20, {6, 6, 2, 2, 3, 3}}};
    auto single = uptake_vs_noise(cps, kTarget, kBack);
    REQUIRE(single.size() == 2);
    CHECK(single[0].iteration == 10);
    CHECK(single[0].uptake == doctest::Approx(6.0));
    CHECK(single[0].noise == doctest::Approx(1.0));
    CHECK(single[1].noise == 0.0);

    const std::vector<double> truth{3, 3, 1, 1, 1, 1};
    std::vector<std::vector<double>> ens{{4, 4, 1, 1, 1, 1}, {2, 2, 2, 2, 1, 1}, {3, 3, 1, 1, 2, 2}};
    auto pts = uptake_vs_noise({7}, {spans(ens)}, kTarget, kBack);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].uptake == doctest::Approx(3.0));
    CHECK(pts[0].noise == doctest::Approx(crc_std(spans(ens), truth, kTarget, kBack).std).epsilon(1e-14));
    CHECK_THROWS_AS(uptake_vs_noise({1, 2}, {spans(ens)}, kTarget, kBack), ShapeError);
}

TEST_CASE("curve interpolation") {
    const std::vector<double> xs{0.0, 1.0, 3.0}, ys{2.0, 4.0, 0.0};
    CHECK(interpolate_curve(xs, ys, 0.5) == doctest::Approx(3.0));
    CHECK(interpolate_curve(xs, ys, 2.0) == doctest::Approx(2.0));
    CHECK(interpolate_curve(xs, ys, 3.0) == doctest::Approx(0.0));
    CHECK(std::isnan(interpolate_curve(xs, ys, -0.1)));
    CHECK(std::isnan(interpolate_curve(xs, ys, 3.1)));
}

TEST_CASE("csv round trip") {
    testing::TempDir dir;
    Table t;
    t.columns = {"name", "value"};
    t.add_row({"a", format_number(0.1)});
    t.add_row({"b", format_number(-1e-300)});
    t.add_row({"c", format_number(std::numeric_limits<double>::infinity())});
    CHECK_THROWS_AS(t.add_row({"x"}), ShapeError);
    write_csv(dir / "t.csv", t);
    auto back = read_csv(dir / "t.csv");
    CHECK(back.columns == t.columns);
    CHECK(back.rows == t.rows);
    auto v = back.numeric("value");
    CHECK(v[0] == 0.1);
    CHECK(v[1] == -1e-300);
    CHECK(std::isinf(v[2]));
    CHECK_THROWS_AS(back.numeric("name"), FormatError);
    CHECK_THROWS_AS(back.column("missing"), ValidationError);
}

TEST_CASE("plots") {
    testing::TempDir dir;
    Plot p{"CRC vs STD", "STD", "CRC", {{"em", {0.1, 0.2, 0.3}, {0.5, 0.6, 0.65}}, {"dip", {0.1, 0.2}, {0.7, 0.8}}}};
    const auto svg = render_svg(p);
    CHECK(svg == render_svg(p));
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("dip") != std::string::npos);

    emit_plot(dir / "fig", p);
    CHECK(slurp(dir / "fig.svg") == svg);
    auto q = plot_from_csv(dir / "fig.csv", p.title, p.x_label, p.y_label);
    REQUIRE(q.series.size() == 2);
    CHECK(q.series[0].x == p.series[0].x);
    CHECK(q.series[1].y == p.series[1].y);
    CHECK(render_svg(q) == svg);

    Plot empty{"none", "x", "y", {}};
    CHECK_THROWS_AS(emit_plot(dir / "empty", empty), ValidationError);
    CHECK_FALSE(std::filesystem::exists(dir / "empty.svg"));
    CHECK_FALSE(std::filesystem::exists(dir / "empty.csv"));
}
