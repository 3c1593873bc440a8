#include "veingen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "veingen/rng.hpp"

namespace veingen {

namespace {

ImageF contrast_normalize(const ImageF& img, const EmbedConfig& cfg) {
    ImageF sq(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const double v = img.at(x, y);
            sq.at(x, y) = static_cast<float>(v * v);
        }
    const auto integral = integral_image(img);
    const auto integral_sq = integral_image(sq);

    ImageF z(img.width(), img.height());
    const int r = cfg.lcn_radius;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const double m = box_mean(integral, x, y, r);
            const double m2 = box_mean(integral_sq, x, y, r);
            const double sd = std::sqrt(std::max(0.0, m2 - m * m));
            double v = (img.at(x, y) - m) / std::max(sd, cfg.lcn_floor);
            v = std::clamp(v, -cfg.lcn_clamp, cfg.lcn_clamp);
            z.at(x, y) = static_cast<float>(v);
        }
    return z;
}

} // namespace

FeatureVector embed(const VeinImage& roi, const EmbedConfig& cfg) {
    if (roi.variant != Variant::roi)
        throw ConfigError("embed expects the roi variant");
    if (roi.image.width() != 600 || roi.image.height() != 200)
        throw ConfigError("embed expects a 600x200 crop, got " +
                          std::to_string(roi.image.width()) + "x" +
                          std::to_string(roi.image.height()));

    ImageF work = roi.image;
    for (int i = 0; i < cfg.presmooth_passes; ++i) work = box_filter(work, 1);
    const ImageF z = contrast_normalize(work, cfg);

    const int w = z.width();
    const int h = z.height();
    const int cells = cfg.grid_rows * cfg.grid_cols;
    std::vector<double> cell_sum(static_cast<std::size_t>(cells) *
                                 cfg.orientations);
    std::vector<int> cell_count(cells, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int cr = y * cfg.grid_rows / h;
            const int cc = x * cfg.grid_cols / w;
            ++cell_count[cr * cfg.grid_cols + cc];
        }

    for (int k = 0; k < cfg.orientations; ++k) {
        const double theta = k * std::numbers::pi / cfg.orientations;
        const int ox =
            static_cast<int>(std::lround(-cfg.probe_offset * std::sin(theta)));
        const int oy =
            static_cast<int>(std::lround(cfg.probe_offset * std::cos(theta)));
        for (int y = 0; y < h; ++y) {
            const int ya = std::clamp(y + oy, 0, h - 1);
            const int yb = std::clamp(y - oy, 0, h - 1);
            const int cr = y * cfg.grid_rows / h;
            for (int x = 0; x < w; ++x) {
                const int xa = std::clamp(x + ox, 0, w - 1);
                const int xb = std::clamp(x - ox, 0, w - 1);
                const double resp = std::max(
                    0.0, static_cast<double>(z.at(xa, ya)) + z.at(xb, yb) -
                             2.0 * z.at(x, y));
                const int cc = x * cfg.grid_cols / w;
                cell_sum[static_cast<std::size_t>(cr * cfg.grid_cols + cc) *
                             cfg.orientations +
                         k] += resp;
            }
        }
    }

    const int pooled_rows = cfg.grid_rows / cfg.pool_rows;
    const int pooled_cols = cfg.grid_cols / cfg.pool_cols;
    std::vector<double> feat(static_cast<std::size_t>(pooled_rows) *
                             pooled_cols * cfg.orientations);
    for (int pr = 0; pr < pooled_rows; ++pr)
        for (int pc = 0; pc < pooled_cols; ++pc) {
            const std::size_t base =
                (static_cast<std::size_t>(pr) * pooled_cols + pc) *
                cfg.orientations;
            for (int k = 0; k < cfg.orientations; ++k) {
                double acc = 0.0;
                for (int dr = 0; dr < cfg.pool_rows; ++dr)
                    for (int dc = 0; dc < cfg.pool_cols; ++dc) {
                        const int cell =
                            (pr * cfg.pool_rows + dr) * cfg.grid_cols +
                            pc * cfg.pool_cols + dc;
                        acc += cell_sum[static_cast<std::size_t>(cell) *
                                            cfg.orientations +
                                        k] /
                               cell_count[cell];
                    }
                feat[base + k] = acc / (cfg.pool_rows * cfg.pool_cols);
            }
            double mean = 0.0;
            for (int k = 0; k < cfg.orientations; ++k) mean += feat[base + k];
            mean /= cfg.orientations;
            for (int k = 0; k < cfg.orientations; ++k) feat[base + k] -= mean;
        }

    double norm_sq = 0.0;
    for (double v : feat) norm_sq += v * v;
    if (norm_sq < 1e-24)
        throw GenerationError("degenerate embedding (no ridge energy)");
    const double inv = 1.0 / std::sqrt(norm_sq);
    FeatureVector out(feat.size());
    for (std::size_t i = 0; i < feat.size(); ++i)
        out[i] = static_cast<float>(feat[i] * inv);
    return out;
}

double dot_similarity(const FeatureVector& a, const FeatureVector& b) {
    if (a.size() != b.size())
        throw ConfigError("feature dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

double cosine_distance(const FeatureVector& a, const FeatureVector& b) {
    return 1.0 - dot_similarity(a, b);
}

FeatureVector class_center(const std::vector<FeatureVector>& members) {
    if (members.empty()) throw ConfigError("class_center of empty class");
    std::vector<double> acc(members.front().size(), 0.0);
    for (const FeatureVector& f : members) {
        if (f.size() != acc.size())
            throw ConfigError("feature dimension mismatch");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f[i];
    }
    double norm_sq = 0.0;
    for (double& v : acc) {
        v /= static_cast<double>(members.size());
        norm_sq += v * v;
    }
    const double inv = norm_sq > 1e-24 ? 1.0 / std::sqrt(norm_sq) : 1.0;
    FeatureVector out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i)
        out[i] = static_cast<float>(acc[i] * inv);
    return out;
}

namespace {

std::vector<std::size_t> class_id_order(const std::vector<ClassSamples>& classes) {
    std::vector<std::size_t> order(classes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return classes[a].class_id < classes[b].class_id;
    });
    return order;
}

} // namespace

UniquenessResult class_uniqueness(const std::vector<ClassSamples>& classes,
                                  const MetricConfig& cfg) {
    if (classes.empty()) throw ConfigError("uniqueness of empty class list");
    std::vector<FeatureVector> accepted;
    for (std::size_t idx : class_id_order(classes)) {
        const FeatureVector center = class_center(classes[idx].members);
        bool fits = true;
        for (const FeatureVector& c : accepted)
            if (cosine_distance(center, c) <= cfg.r) {
                fits = false;
                break;
            }
        if (fits) accepted.push_back(center);
    }
    UniquenessResult res;
    res.unique_count = static_cast<int>(accepted.size());
    res.u_class = static_cast<double>(accepted.size()) /
                  static_cast<double>(classes.size());
    return res;
}

double intra_consistency(const std::vector<ClassSamples>& classes,
                         const MetricConfig& cfg) {
    if (classes.empty()) throw ConfigError("consistency of empty class list");
    std::uint64_t within = 0;
    std::uint64_t total = 0;
    for (const ClassSamples& cls : classes) {
        const FeatureVector center = class_center(cls.members);
        for (const FeatureVector& f : cls.members) {
            if (cosine_distance(f, center) < cfg.r) ++within;
            ++total;
        }
    }
    return static_cast<double>(within) / static_cast<double>(total);
}

double intra_diversity(const std::vector<ClassSamples>& classes,
                       const MetricConfig& cfg) {
    if (classes.empty()) throw ConfigError("diversity of empty class list");
    const std::size_t n = classes.front().members.size();
    if (n < 2)
        throw ConfigError("diversity needs at least two samples per class");
    std::uint64_t hits = 0;
    for (const ClassSamples& cls : classes) {
        if (cls.members.size() != n)
            throw ConfigError("diversity requires equal class sizes");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double d =
                    cosine_distance(cls.members[i], cls.members[j]);
                if (cfg.diversity_count_below ? (d < cfg.r) : (d > cfg.r))
                    ++hits;
            }
    }
    const double pairs_per_class = static_cast<double>(n) * (n - 1) / 2.0;
    return static_cast<double>(hits) /
           (static_cast<double>(classes.size()) * pairs_per_class);
}

void Histogram::add(double v) {
    int bin = static_cast<int>(std::floor((v - lo) / bin_width));
    bin = std::clamp(bin, 0, static_cast<int>(counts.size()) - 1);
    ++counts[bin];
    ++n;
    sum += v;
    sum_sq += v * v;
}

double Histogram::variance() const {
    if (n == 0) return 0.0;
    const double m = mean();
    return std::max(0.0, sum_sq / static_cast<double>(n) - m * m);
}

ScoreDistributions score_distributions(const std::vector<ClassSamples>& classes,
                                       std::uint64_t seed,
                                       std::uint64_t impostor_cap) {
    ScoreDistributions out;
    for (const ClassSamples& cls : classes)
        for (std::size_t i = 0; i < cls.members.size(); ++i)
            for (std::size_t j = i + 1; j < cls.members.size(); ++j)
                out.genuine.add(dot_similarity(cls.members[i], cls.members[j]));

    if (classes.size() < 2) {
        out.impostor_empty = true;
        return out;
    }

    struct Block {
        std::size_t a, b;
        std::uint64_t start;
    };
    std::vector<Block> blocks;
    std::uint64_t total = 0;
    for (std::size_t a = 0; a < classes.size(); ++a)
        for (std::size_t b = a + 1; b < classes.size(); ++b) {
            blocks.push_back({a, b, total});
            total += static_cast<std::uint64_t>(classes[a].members.size()) *
                     classes[b].members.size();
        }
    out.impostor_total = total;
    if (total == 0) {
        out.impostor_empty = true;
        return out;
    }

    if (total <= impostor_cap) {
        for (const Block& blk : blocks)
            for (const FeatureVector& fa : classes[blk.a].members)
                for (const FeatureVector& fb : classes[blk.b].members)
                    out.impostor.add(dot_similarity(fa, fb));
        return out;
    }

    out.impostor_sampled = true;
    Rng rng(seed);
    for (std::uint64_t t = 0; t < impostor_cap; ++t) {
        const auto k = static_cast<std::uint64_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
        auto it = std::upper_bound(
            blocks.begin(), blocks.end(), k,
            [](std::uint64_t v, const Block& blk) { return v < blk.start; });
        const Block& blk = *std::prev(it);
        const std::uint64_t off = k - blk.start;
        const std::size_t nb = classes[blk.b].members.size();
        const FeatureVector& fa = classes[blk.a].members[off / nb];
        const FeatureVector& fb = classes[blk.b].members[off % nb];
        out.impostor.add(dot_similarity(fa, fb));
    }
    return out;
}

} // namespace veingen
