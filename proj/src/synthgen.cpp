#include "ctda/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ctda/fft.hpp"
#include "ctda/png_io.hpp"
#include "json.hpp"

namespace ctda {

namespace {

using nlohmann::json;

void check_range(double lo, double hi, const char* name) {
    if (!(lo <= hi)) throw std::invalid_argument(std::string("GeneratorConfig: empty range for ") + name);
}

void check_fraction_range(double lo, double hi, const char* name) {
    check_range(lo, hi, name);
    if (!(lo > 0.0 && hi <= 1.0))
        throw std::invalid_argument(std::string("GeneratorConfig: intensity fraction outside (0,1] for ") + name);
}

int signed_frequency(int k, int n) { return k <= n / 2 ? k : k - n; }

}  // namespace

const char* to_string(ClassLabel c) {
    switch (c) {
        case ClassLabel::Normal: return "normal";
        case ClassLabel::Mass: return "mass";
        case ClassLabel::Calcification: return "calcification";
    }
    return "?";
}

const char* to_string(DomainTag d) { return d == DomainTag::Raw ? "raw" : "lut"; }

const char* to_string(DatasetMode m) { return m == DatasetMode::Mixed ? "mixed" : "augmented"; }

ClassLabel class_from_string(const std::string& s) {
    if (s == "normal") return ClassLabel::Normal;
    if (s == "mass") return ClassLabel::Mass;
    if (s == "calcification") return ClassLabel::Calcification;
    throw std::invalid_argument("unknown class label: " + s);
}

DomainTag domain_from_string(const std::string& s) {
    if (s == "raw") return DomainTag::Raw;
    if (s == "lut") return DomainTag::Lut;
    throw std::invalid_argument("unknown domain tag: " + s);
}

DatasetMode mode_from_string(const std::string& s) {
    if (s == "mixed") return DatasetMode::Mixed;
    if (s == "augmented") return DatasetMode::Augmented;
    throw std::invalid_argument("unknown dataset mode: " + s);
}

void GeneratorConfig::validate() const {
    if (patch_size < 16) throw std::invalid_argument("GeneratorConfig: patch_size must be >= 16");
    if (patch_size % 2 != 0) throw std::invalid_argument("GeneratorConfig: patch_size must be even");
    check_range(beta_range[0], beta_range[1], "beta_range");
    if (beta_range[0] < 0.0) throw std::invalid_argument("GeneratorConfig: beta must be nonnegative");
    check_range(mass_radius_range[0], mass_radius_range[1], "mass_radius_range");
    if (mass_radius_range[0] <= 0.0) throw std::invalid_argument("GeneratorConfig: mass radii must be positive");
    check_fraction_range(mass_intensity_range[0], mass_intensity_range[1], "mass_intensity_range");
    if (calc_count_range[0] > calc_count_range[1] || calc_count_range[0] < 1)
        throw std::invalid_argument("GeneratorConfig: bad calc_count_range");
    if (calc_area_side_range[0] > calc_area_side_range[1] || calc_area_side_range[0] < 1)
        throw std::invalid_argument("GeneratorConfig: bad calc_area_side_range");
    if (calc_area_side_range[1] + 2 > patch_size)
        throw std::invalid_argument("GeneratorConfig: calcification area does not fit the patch");
    check_fraction_range(calc_intensity_range[0], calc_intensity_range[1], "calc_intensity_range");
}

void LutParams::validate() const {
    if (!(width > 0.0)) throw std::invalid_argument("LutParams: width must be positive");
    if (!(center > 0.0 && center < 1.0)) throw std::invalid_argument("LutParams: center must be in (0,1)");
}

double power_law_filter(double u, double v, double beta) {
    const double r2 = u * u + v * v;
    if (r2 == 0.0) return 0.0;
    return std::pow(r2, -beta / 2.0);
}

Patch sample_texture(const GeneratorConfig& config, double beta, std::uint64_t seed) {
    config.validate();
    if (beta < 0.0) throw std::invalid_argument("sample_texture: beta must be nonnegative");
    const int n = config.patch_size;

    RandomStream rng(seed);
    std::vector<cplx> field(static_cast<std::size_t>(n) * n);
    for (auto& v : field) v = cplx(rng.normal(), 0.0);

    fft_2d(field, n, false);
    for (int ku = 0; ku < n; ++ku) {
        const int u = signed_frequency(ku, n);
        for (int kv = 0; kv < n; ++kv) {
            const int v = signed_frequency(kv, n);
            field[static_cast<std::size_t>(ku) * n + kv] *=
                power_law_filter(static_cast<double>(u), static_cast<double>(v), beta);
        }
    }
    fft_2d(field, n, true);

    Patch patch;
    patch.side = n;
    patch.pixels.resize(static_cast<std::size_t>(n) * n);
    double lo = field[0].real(), hi = field[0].real();
    for (std::size_t i = 0; i < patch.pixels.size(); ++i) {
        const double x = field[i].real();
        patch.pixels[i] = x;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi - lo < 1e-12)
        throw std::runtime_error("sample_texture: degenerate constant field (RNG misuse?)");
    const double inv = 1.0 / (hi - lo);
    for (auto& p : patch.pixels) p = (p - lo) * inv;

    patch.label = ClassLabel::Normal;
    patch.domain = DomainTag::Raw;
    patch.provenance.seed = seed;
    patch.provenance.beta = beta;
    return patch;
}

MassGeometry sample_mass_geometry(const GeneratorConfig& config, RandomStream& rng) {
    MassGeometry g;
    g.center_x = rng.uniform(0.0, static_cast<double>(config.patch_size - 1));
    g.center_y = rng.uniform(0.0, static_cast<double>(config.patch_size - 1));
    g.radius_x = rng.uniform(config.mass_radius_range[0], config.mass_radius_range[1]);
    g.radius_y = rng.uniform(config.mass_radius_range[0], config.mass_radius_range[1]);
    g.intensity_fraction = rng.uniform(config.mass_intensity_range[0], config.mass_intensity_range[1]);
    return g;
}

CalcCluster sample_calc_cluster(const GeneratorConfig& config, RandomStream& rng) {
    CalcCluster c;
    c.side = static_cast<int>(rng.uniform_int(config.calc_area_side_range[0], config.calc_area_side_range[1]));
    // 1px margin keeps the radius-1 dot discs inside the patch
    c.origin_x = static_cast<int>(rng.uniform_int(1, config.patch_size - c.side - 1));
    c.origin_y = static_cast<int>(rng.uniform_int(1, config.patch_size - c.side - 1));
    const int n_dots = static_cast<int>(rng.uniform_int(config.calc_count_range[0], config.calc_count_range[1]));
    c.dots.resize(n_dots);
    for (auto& d : c.dots) {
        d.x = c.origin_x + static_cast<int>(rng.uniform_int(0, c.side - 1));
        d.y = c.origin_y + static_cast<int>(rng.uniform_int(0, c.side - 1));
        d.intensity = rng.uniform(config.calc_intensity_range[0], config.calc_intensity_range[1]);
    }
    return c;
}

Patch insert_mass(const Patch& patch, const MassGeometry& g) {
    if (g.radius_x <= 0.0 || g.radius_y <= 0.0) throw std::invalid_argument("insert_mass: radii must be positive");
    if (g.center_x < 0 || g.center_x > patch.side - 1 || g.center_y < 0 || g.center_y > patch.side - 1)
        throw std::invalid_argument("insert_mass: center outside the patch");

    Patch out = patch;
    const int cx = static_cast<int>(std::lround(g.center_x));
    const int cy = static_cast<int>(std::lround(g.center_y));
    const double base = patch.at(cx, cy);
    const double amplitude = g.intensity_fraction - base;

    for (int y = 0; y < out.side; ++y) {
        const double dy = (static_cast<double>(y) - g.center_y) / g.radius_y;
        for (int x = 0; x < out.side; ++x) {
            const double dx = (static_cast<double>(x) - g.center_x) / g.radius_x;
            const double bump = amplitude * std::exp(-0.5 * (dx * dx + dy * dy));
            double v = out.pixels[static_cast<std::size_t>(y) * out.side + x] + bump;
            v = std::clamp(v, 0.0, 1.0);
            out.pixels[static_cast<std::size_t>(y) * out.side + x] = v;
        }
    }
    out.label = ClassLabel::Mass;
    out.provenance.mass = g;
    return out;
}

Patch insert_calcifications(const Patch& patch, const CalcCluster& cluster) {
    if (cluster.origin_x < 0 || cluster.origin_y < 0 || cluster.origin_x + cluster.side > patch.side ||
        cluster.origin_y + cluster.side > patch.side)
        throw std::invalid_argument("insert_calcifications: cluster square outside the patch");

    Patch out = patch;
    static const int offsets[5][2] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const auto& d : cluster.dots) {
        for (const auto& off : offsets) {
            const int x = d.x + off[0];
            const int y = d.y + off[1];
            if (x < 0 || y < 0 || x >= out.side || y >= out.side) continue;
            out.pixels[static_cast<std::size_t>(y) * out.side + x] = d.intensity;
        }
    }
    out.label = ClassLabel::Calcification;
    out.provenance.calc = cluster;
    return out;
}

double lut_sigmoid(double p, const LutParams& params) {
    return 1.0 / (1.0 + std::exp(-(p - params.center) / params.width));
}

Patch apply_lut(const Patch& patch, const LutParams& params) {
    params.validate();
    if (patch.domain == DomainTag::Lut)
        throw std::invalid_argument("apply_lut: patch already carries the lut domain tag");

    const double s0 = lut_sigmoid(0.0, params);
    const double s1 = lut_sigmoid(1.0, params);
    const double inv = 1.0 / (s1 - s0);

    Patch out = patch;
    for (auto& p : out.pixels) p = (lut_sigmoid(p, params) - s0) * inv;
    out.domain = DomainTag::Lut;
    return out;
}

Patch make_patch(const GeneratorConfig& config, ClassLabel label, std::uint64_t seed) {
    RandomStream rng(seed);
    const double beta = rng.uniform(config.beta_range[0], config.beta_range[1]);
    const std::uint64_t texture_seed = splitmix64(seed ^ 0xc0ffee5eed5ULL);

    Patch patch = sample_texture(config, beta, texture_seed);
    patch.provenance.seed = seed;
    patch.provenance.beta = beta;
    if (label == ClassLabel::Mass) {
        patch = insert_mass(patch, sample_mass_geometry(config, rng));
    } else if (label == ClassLabel::Calcification) {
        patch = insert_calcifications(patch, sample_calc_cluster(config, rng));
    }
    return patch;
}

namespace {

json mass_to_json(const MassGeometry& g) {
    return json{{"center_x", g.center_x},
                {"center_y", g.center_y},
                {"radius_x", g.radius_x},
                {"radius_y", g.radius_y},
                {"intensity_fraction", g.intensity_fraction}};
}

MassGeometry mass_from_json(const json& j) {
    MassGeometry g;
    g.center_x = j.at("center_x").get<double>();
    g.center_y = j.at("center_y").get<double>();
    g.radius_x = j.at("radius_x").get<double>();
    g.radius_y = j.at("radius_y").get<double>();
    g.intensity_fraction = j.at("intensity_fraction").get<double>();
    return g;
}

json calc_to_json(const CalcCluster& c) {
    json dots = json::array();
    for (const auto& d : c.dots) dots.push_back(json{{"x", d.x}, {"y", d.y}, {"intensity", d.intensity}});
    return json{{"origin_x", c.origin_x}, {"origin_y", c.origin_y}, {"side", c.side}, {"dots", dots}};
}

CalcCluster calc_from_json(const json& j) {
    CalcCluster c;
    c.origin_x = j.at("origin_x").get<int>();
    c.origin_y = j.at("origin_y").get<int>();
    c.side = j.at("side").get<int>();
    for (const auto& d : j.at("dots")) {
        c.dots.push_back(CalcDot{d.at("x").get<int>(), d.at("y").get<int>(), d.at("intensity").get<double>()});
    }
    return c;
}

json generator_to_json(const GeneratorConfig& g) {
    return json{{"patch_size", g.patch_size},
                {"beta_range", {g.beta_range[0], g.beta_range[1]}},
                {"mass_radius_range", {g.mass_radius_range[0], g.mass_radius_range[1]}},
                {"mass_intensity_range", {g.mass_intensity_range[0], g.mass_intensity_range[1]}},
                {"calc_count_range", {g.calc_count_range[0], g.calc_count_range[1]}},
                {"calc_area_side_range", {g.calc_area_side_range[0], g.calc_area_side_range[1]}},
                {"calc_intensity_range", {g.calc_intensity_range[0], g.calc_intensity_range[1]}},
                {"seed", g.seed}};
}

GeneratorConfig generator_from_json(const json& j) {
    GeneratorConfig g;
    g.patch_size = j.at("patch_size").get<int>();
    j.at("beta_range")[0].get_to(g.beta_range[0]);
    j.at("beta_range")[1].get_to(g.beta_range[1]);
    j.at("mass_radius_range")[0].get_to(g.mass_radius_range[0]);
    j.at("mass_radius_range")[1].get_to(g.mass_radius_range[1]);
    j.at("mass_intensity_range")[0].get_to(g.mass_intensity_range[0]);
    j.at("mass_intensity_range")[1].get_to(g.mass_intensity_range[1]);
    j.at("calc_count_range")[0].get_to(g.calc_count_range[0]);
    j.at("calc_count_range")[1].get_to(g.calc_count_range[1]);
    j.at("calc_area_side_range")[0].get_to(g.calc_area_side_range[0]);
    j.at("calc_area_side_range")[1].get_to(g.calc_area_side_range[1]);
    j.at("calc_intensity_range")[0].get_to(g.calc_intensity_range[0]);
    j.at("calc_intensity_range")[1].get_to(g.calc_intensity_range[1]);
    g.seed = j.at("seed").get<std::uint64_t>();
    return g;
}

}  // namespace

void write_manifest(const Manifest& manifest, const std::filesystem::path& dataset_dir) {
    json records = json::array();
    for (const auto& r : manifest.records) {
        json rec{{"file", r.file},
                 {"class", to_string(r.label)},
                 {"domain", to_string(r.domain)},
                 {"base_index", r.base_index},
                 {"seed", r.seed},
                 {"beta", r.beta}};
        if (r.mass)
            rec["lesion"] = json{{"kind", "mass"}, {"params", mass_to_json(*r.mass)}};
        else if (r.calc)
            rec["lesion"] = json{{"kind", "calcification"}, {"params", calc_to_json(*r.calc)}};
        else
            rec["lesion"] = nullptr;
        records.push_back(std::move(rec));
    }

    json doc{{"schema_version", manifest.schema_version},
             {"generator", generator_to_json(manifest.generator)},
             {"lut", json{{"center", manifest.lut.center}, {"width", manifest.lut.width}}},
             {"mode", to_string(manifest.mode)},
             {"split_seed", manifest.split_seed},
             {"records", std::move(records)}};

    std::ofstream out(dataset_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_manifest: cannot open manifest.json");
    out << doc.dump(2) << "\n";
}

Manifest read_manifest(const std::filesystem::path& dataset_dir) {
    std::ifstream in(dataset_dir / "manifest.json", std::ios::binary);
    if (!in) throw std::runtime_error("read_manifest: cannot open " + (dataset_dir / "manifest.json").string());
    json doc = json::parse(in);

    Manifest m;
    m.schema_version = doc.at("schema_version").get<int>();
    if (m.schema_version != 1) throw std::runtime_error("read_manifest: unsupported schema version");
    m.generator = generator_from_json(doc.at("generator"));
    m.lut.center = doc.at("lut").at("center").get<double>();
    m.lut.width = doc.at("lut").at("width").get<double>();
    m.mode = mode_from_string(doc.at("mode").get<std::string>());
    m.split_seed = doc.at("split_seed").get<std::uint64_t>();
    for (const auto& rec : doc.at("records")) {
        DatasetRecord r;
        r.file = rec.at("file").get<std::string>();
        r.label = class_from_string(rec.at("class").get<std::string>());
        r.domain = domain_from_string(rec.at("domain").get<std::string>());
        r.base_index = rec.at("base_index").get<std::uint64_t>();
        r.seed = rec.at("seed").get<std::uint64_t>();
        r.beta = rec.at("beta").get<double>();
        const auto& lesion = rec.at("lesion");
        if (!lesion.is_null()) {
            const auto kind = lesion.at("kind").get<std::string>();
            if (kind == "mass")
                r.mass = mass_from_json(lesion.at("params"));
            else if (kind == "calcification")
                r.calc = calc_from_json(lesion.at("params"));
            else
                throw std::runtime_error("read_manifest: unknown lesion kind " + kind);
        }
        m.records.push_back(std::move(r));
    }
    return m;
}

Manifest generate_dataset(const GeneratorConfig& config, const LutParams& lut, int n_patches, DatasetMode mode,
                          std::uint64_t split_seed, const std::filesystem::path& out_dir) {
    config.validate();
    lut.validate();
    if (n_patches <= 0 || n_patches % 3 != 0)
        throw std::invalid_argument("generate_dataset: n_patches must be a positive multiple of 3");

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::remove_all(out_dir / "patches", ec);
    fs::create_directories(out_dir / "patches");

    struct BaseEntry {
        ClassLabel label;
        std::uint64_t seed;
        DomainTag assigned;  // mixed mode only
    };
    std::vector<BaseEntry> bases(n_patches);
    for (int i = 0; i < n_patches; ++i) {
        bases[i].label = static_cast<ClassLabel>(i % 3);
        bases[i].seed = per_patch_seed(config.seed, static_cast<std::uint64_t>(i));
        bases[i].assigned = (splitmix64(split_seed ^ splitmix64(static_cast<std::uint64_t>(i))) & 1ULL)
                                ? DomainTag::Lut
                                : DomainTag::Raw;
    }

    Manifest manifest;
    manifest.generator = config;
    manifest.lut = lut;
    manifest.mode = mode;
    manifest.split_seed = split_seed;

    const int per_base = mode == DatasetMode::Augmented ? 2 : 1;
    manifest.records.resize(static_cast<std::size_t>(n_patches) * per_base);

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_patches; ++i) {
        const Patch raw = make_patch(config, bases[i].label, bases[i].seed);
        for (int v = 0; v < per_base; ++v) {
            const int rec_idx = i * per_base + v;
            DomainTag domain;
            if (mode == DatasetMode::Augmented)
                domain = v == 0 ? DomainTag::Raw : DomainTag::Lut;
            else
                domain = bases[i].assigned;
            const Patch final_patch = domain == DomainTag::Lut ? apply_lut(raw, lut) : raw;

            DatasetRecord rec;
            rec.file = "patches/" + std::to_string(rec_idx) + ".png";
            rec.label = raw.label;
            rec.domain = domain;
            rec.base_index = static_cast<std::uint64_t>(i);
            rec.seed = bases[i].seed;
            rec.beta = raw.provenance.beta;
            rec.mass = raw.provenance.mass;
            rec.calc = raw.provenance.calc;
            write_gray16_png(out_dir / rec.file, config.patch_size, final_patch.pixels);
            manifest.records[rec_idx] = std::move(rec);
        }
    }

    write_manifest(manifest, out_dir);
    return manifest;
}

std::vector<double> regenerate_record(const Manifest& manifest, const DatasetRecord& record) {
    Patch patch = make_patch(manifest.generator, record.label, record.seed);
    if (record.domain == DomainTag::Lut) patch = apply_lut(patch, manifest.lut);
    std::vector<double> out(patch.pixels.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = quantize16(patch.pixels[i]);
    return out;
}

std::vector<double> spectrum_ring_power(const std::vector<double>& pixels, int side, int r_min, int r_max) {
    std::vector<cplx> field(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) field[i] = cplx(pixels[i], 0.0);
    fft_2d(field, side, false);

    std::vector<double> power(static_cast<std::size_t>(r_max - r_min + 1), 0.0);
    std::vector<long> counts(power.size(), 0);
    for (int ku = 0; ku < side; ++ku) {
        const int u = signed_frequency(ku, side);
        for (int kv = 0; kv < side; ++kv) {
            const int v = signed_frequency(kv, side);
            const int ring = static_cast<int>(std::lround(std::sqrt(static_cast<double>(u) * u + static_cast<double>(v) * v)));
            if (ring < r_min || ring > r_max) continue;
            const cplx f = field[static_cast<std::size_t>(ku) * side + kv];
            power[ring - r_min] += std::norm(f);
            counts[ring - r_min] += 1;
        }
    }
    for (std::size_t i = 0; i < power.size(); ++i) {
        if (counts[i] == 0) throw std::runtime_error("spectrum_ring_power: empty frequency ring");
        power[i] /= static_cast<double>(counts[i]);
    }
    return power;
}

double fit_loglog_slope(const std::vector<double>& ring_power, int r_min) {
    const int n = static_cast<int>(ring_power.size());
    if (n < 2) throw std::invalid_argument("fit_loglog_slope: need at least two rings");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double x = std::log(static_cast<double>(r_min + i));
        const double y = std::log(std::max(ring_power[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double spectrum_slope(const std::vector<double>& pixels, int side, int r_min, int r_max) {
    return fit_loglog_slope(spectrum_ring_power(pixels, side, r_min, r_max), r_min);
}

std::vector<double> augment_pixels(const std::vector<double>& pixels, int side, AugmentOp op) {
    std::vector<double> out(pixels.size());
    const int n = side;
    auto src = [&](int x, int y) { return pixels[static_cast<std::size_t>(y) * n + x]; };
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double v = 0.0;
            switch (op) {
                case AugmentOp::Identity: v = src(x, y); break;
                case AugmentOp::FlipHorizontal: v = src(n - 1 - x, y); break;
                case AugmentOp::FlipVertical: v = src(x, n - 1 - y); break;
                case AugmentOp::Rotate90: v = src(y, n - 1 - x); break;
                case AugmentOp::Rotate180: v = src(n - 1 - x, n - 1 - y); break;
                case AugmentOp::Rotate270: v = src(n - 1 - y, x); break;
            }
            out[static_cast<std::size_t>(y) * n + x] = v;
        }
    }
    return out;
}

Patch augment_patch(const Patch& patch, AugmentOp op) {
    Patch out = patch;
    out.pixels = augment_pixels(patch.pixels, patch.side, op);
    return out;
}

}  // namespace ctda
