#include "veingen/annotations.hpp"

#include <openssl/evp.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace veingen {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

const char* category_name(VariationCategory c) {
    switch (c) {
        case VariationCategory::shift: return "shift";
        case VariationCategory::scale: return "scale";
        case VariationCategory::roll: return "roll";
        case VariationCategory::rotation: return "rotation";
        case VariationCategory::exposure: return "exposure";
        case VariationCategory::motion_blur: return "motion_blur";
        case VariationCategory::optical_blur: return "optical_blur";
        case VariationCategory::scattering_blur: return "scattering_blur";
        case VariationCategory::combo: return "combo";
    }
    return "combo";
}

VariationCategory category_from_name(const std::string& s) {
    if (s == "shift") return VariationCategory::shift;
    if (s == "scale") return VariationCategory::scale;
    if (s == "roll") return VariationCategory::roll;
    if (s == "rotation") return VariationCategory::rotation;
    if (s == "exposure") return VariationCategory::exposure;
    if (s == "motion_blur") return VariationCategory::motion_blur;
    if (s == "optical_blur") return VariationCategory::optical_blur;
    if (s == "scattering_blur") return VariationCategory::scattering_blur;
    if (s == "combo") return VariationCategory::combo;
    throw AnnotationSchemaError("unknown variation category '" + s + "'");
}

void check_range(bool ok, const std::string& what) {
    if (!ok) throw AnnotationRangeError("annotation value out of range: " + what);
}

} // namespace

std::string annotation_to_xml(const AnnotationRecord& rec) {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<sample_annotation>\n";
    out << "  <identity>" << rec.identity << "</identity>\n";
    out << "  <sample>" << rec.sample << "</sample>\n";
    out << "  <image>" << rec.image_path << "</image>\n";
    out << "  <pattern_mask>" << rec.pattern_mask_path << "</pattern_mask>\n";
    out << "  <shape_mask>" << rec.shape_mask_path << "</shape_mask>\n";
    out << "  <joints>\n";
    for (const Joint& j : rec.joints)
        out << "    <joint cx=\"" << fmt(j.center.x) << "\" cy=\""
            << fmt(j.center.y) << "\" r=\"" << fmt(j.radius) << "\"/>\n";
    out << "  </joints>\n";
    out << "  <roi cx=\"" << fmt(rec.roi.cx) << "\" cy=\"" << fmt(rec.roi.cy)
        << "\" width=\"" << fmt(rec.roi.width) << "\" height=\""
        << fmt(rec.roi.height) << "\"/>\n";
    out << "  <base_roi cx=\"" << fmt(rec.base_roi.cx) << "\" cy=\""
        << fmt(rec.base_roi.cy) << "\" width=\"" << fmt(rec.base_roi.width)
        << "\" height=\"" << fmt(rec.base_roi.height) << "\"/>\n";
    out << "  <variation category=\"" << category_name(rec.params.category)
        << "\" combo=\"" << (rec.params.combo ? 1 : 0) << "\">\n";
    out << "    <shift_x>" << fmt(rec.params.shift_x) << "</shift_x>\n";
    out << "    <rotation>" << fmt(rec.params.rotation_deg) << "</rotation>\n";
    out << "    <scale>" << fmt(rec.params.scale) << "</scale>\n";
    out << "    <roll>" << fmt(rec.params.roll_deg) << "</roll>\n";
    if (rec.params.exposure_gain)
        out << "    <exposure>" << fmt(*rec.params.exposure_gain)
            << "</exposure>\n";
    switch (rec.params.blur) {
        case BlurKind::none:
            break;
        case BlurKind::motion:
            out << "    <blur kind=\"motion\" length=\""
                << fmt(rec.params.blur_length) << "\" angle=\""
                << fmt(rec.params.blur_angle_deg) << "\"/>\n";
            break;
        case BlurKind::optical:
            out << "    <blur kind=\"optical\" radius=\""
                << fmt(rec.params.blur_radius) << "\"/>\n";
            break;
        case BlurKind::scattering:
            out << "    <blur kind=\"scattering\" scale=\""
                << fmt(rec.params.blur_scale) << "\"/>\n";
            break;
    }
    out << "  </variation>\n";
    out << "</sample_annotation>\n";
    return out.str();
}

AnnotationRecord annotation_from_xml(const std::string& xml) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(xml);
    try {
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw AnnotationParseError(std::string("malformed annotation XML: ") +
                                   e.what());
    }

    AnnotationRecord rec;
    try {
        const pt::ptree& root = tree.get_child("sample_annotation");
        static const std::set<std::string> known = {
            "<xmlattr>",     "identity", "sample",   "image",
            "pattern_mask",  "shape_mask", "joints", "roi",
            "base_roi",      "variation"};
        for (const auto& [name, node] : root)
            if (!known.count(name))
                throw AnnotationSchemaError("unexpected element '" + name +
                                            "' in sample_annotation");
        rec.identity = root.get<int>("identity");
        rec.sample = root.get<int>("sample");
        rec.image_path = root.get<std::string>("image");
        rec.pattern_mask_path = root.get<std::string>("pattern_mask");
        rec.shape_mask_path = root.get<std::string>("shape_mask");

        for (const auto& [name, node] : root.get_child("joints")) {
            if (name != "joint") {
                if (name == "<xmlattr>") continue;
                throw AnnotationSchemaError("unexpected element '" + name +
                                            "' in joints");
            }
            Joint j;
            j.center.x = node.get<double>("<xmlattr>.cx");
            j.center.y = node.get<double>("<xmlattr>.cy");
            j.radius = node.get<double>("<xmlattr>.r");
            rec.joints.push_back(j);
        }

        auto read_box = [&](const char* key) {
            RoiBox b;
            b.cx = root.get<double>(std::string(key) + ".<xmlattr>.cx");
            b.cy = root.get<double>(std::string(key) + ".<xmlattr>.cy");
            b.width = root.get<double>(std::string(key) + ".<xmlattr>.width");
            b.height = root.get<double>(std::string(key) + ".<xmlattr>.height");
            return b;
        };
        rec.roi = read_box("roi");
        rec.base_roi = read_box("base_roi");

        const pt::ptree& var = root.get_child("variation");
        rec.params.category =
            category_from_name(var.get<std::string>("<xmlattr>.category"));
        rec.params.combo = var.get<int>("<xmlattr>.combo") != 0;
        rec.params.shift_x = var.get<double>("shift_x");
        rec.params.rotation_deg = var.get<double>("rotation");
        rec.params.scale = var.get<double>("scale");
        rec.params.roll_deg = var.get<double>("roll");
        if (auto g = var.get_optional<double>("exposure"))
            rec.params.exposure_gain = *g;
        if (auto blur = var.get_child_optional("blur")) {
            const std::string kind = blur->get<std::string>("<xmlattr>.kind");
            if (kind == "motion") {
                rec.params.blur = BlurKind::motion;
                rec.params.blur_length = blur->get<double>("<xmlattr>.length");
                rec.params.blur_angle_deg =
                    blur->get<double>("<xmlattr>.angle");
            } else if (kind == "optical") {
                rec.params.blur = BlurKind::optical;
                rec.params.blur_radius = blur->get<double>("<xmlattr>.radius");
            } else if (kind == "scattering") {
                rec.params.blur = BlurKind::scattering;
                rec.params.blur_scale = blur->get<double>("<xmlattr>.scale");
            } else {
                throw AnnotationSchemaError("unknown blur kind '" + kind + "'");
            }
        }
    } catch (const pt::ptree_error& e) {
        throw AnnotationSchemaError(std::string("annotation schema violation: ") +
                                    e.what());
    }

    check_range(rec.identity >= 0, "identity");
    check_range(rec.sample >= 0, "sample");
    check_range(rec.joints.size() == 2, "joint count");
    for (const Joint& j : rec.joints) check_range(j.radius > 0.0, "joint radius");
    check_range(rec.roi.width > 0.0 && rec.roi.height > 0.0, "roi extent");
    check_range(rec.base_roi.width > 0.0 && rec.base_roi.height > 0.0,
                "base_roi extent");
    check_range(std::abs(rec.params.shift_x) <= 20.0 + 1e-6, "shift_x");
    check_range(std::abs(rec.params.rotation_deg) <= 20.0 + 1e-6, "rotation");
    check_range(rec.params.scale >= 0.85 - 1e-6 && rec.params.scale <= 1.15 + 1e-6,
                "scale");
    check_range(std::abs(rec.params.roll_deg) <= 20.0 + 1e-6, "roll");
    if (rec.params.exposure_gain)
        check_range(*rec.params.exposure_gain >= 0.5 &&
                        *rec.params.exposure_gain <= 2.0,
                    "exposure gain");
    return rec;
}

void write_annotation(const std::filesystem::path& path,
                      const AnnotationRecord& rec) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot create " + path.string());
    out << annotation_to_xml(rec);
}

AnnotationRecord read_annotation(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AnnotationParseError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return annotation_from_xml(ss.str());
}

namespace {

struct DigestCtx {
    EVP_MD_CTX* ctx;
    DigestCtx() : ctx(EVP_MD_CTX_new()) {
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("sha256 init failed");
    }
    ~DigestCtx() { EVP_MD_CTX_free(ctx); }
    void update(const void* p, std::size_t n) {
        if (EVP_DigestUpdate(ctx, p, n) != 1)
            throw std::runtime_error("sha256 update failed");
    }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx, md, &len) != 1)
            throw std::runtime_error("sha256 final failed");
        static const char* digits = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 15]);
        }
        return out;
    }
};

} // namespace

std::string sha256_hex(const void* data, std::size_t len) {
    DigestCtx d;
    d.update(data, len);
    return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open " + path.string());
    DigestCtx d;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) d.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return d.hex();
}

namespace {

bool is_payload(const std::filesystem::path& rel) {
    const std::string name = rel.filename().string();
    if (name == "manifest.txt" || name == "run.stamp" || name == ".done")
        return false;
    return true;
}

std::vector<std::string> walk_payload(const std::filesystem::path& root) {
    std::vector<std::string> files;
    for (auto it = std::filesystem::recursive_directory_iterator(root);
         it != std::filesystem::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        const auto rel = std::filesystem::relative(it->path(), root);
        if (!is_payload(rel)) continue;
        files.push_back(rel.generic_string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

} // namespace

Manifest build_manifest(const std::filesystem::path& root,
                        std::uint64_t master_seed,
                        const std::string& config_sha256, int identities,
                        int samples_per_identity,
                        const std::vector<std::string>& suffixes,
                        const std::vector<int>& failed_identities) {
    const std::set<int> failed(failed_identities.begin(),
                               failed_identities.end());
    std::vector<std::string> expected;
    char buf[64];
    for (int id = 0; id < identities; ++id) {
        if (failed.count(id)) continue;
        std::snprintf(buf, sizeof buf, "%04d", id);
        const std::string dir(buf);
        for (int s = 0; s < samples_per_identity; ++s) {
            std::snprintf(buf, sizeof buf, "%04d", s);
            const std::string stem = dir + "/" + buf;
            for (const std::string& suffix : suffixes)
                expected.push_back(stem + suffix);
            expected.push_back(stem + ".xml");
        }
        expected.push_back("masks/" + dir + "/pattern.png");
        expected.push_back("masks/" + dir + "/shape.png");
    }
    std::sort(expected.begin(), expected.end());

    const std::vector<std::string> present = walk_payload(root);
    const std::set<std::string> present_set(present.begin(), present.end());
    std::string gaps;
    int gap_count = 0;
    for (const std::string& e : expected)
        if (!present_set.count(e)) {
            if (gap_count < 20) gaps += "\n  " + e;
            ++gap_count;
        }
    if (gap_count > 0)
        throw IntegrityError("dataset incomplete, " +
                             std::to_string(gap_count) +
                             " expected files missing:" + gaps);

    Manifest m;
    m.master_seed = master_seed;
    m.config_sha256 = config_sha256;
    m.identities = identities;
    m.samples_per_identity = samples_per_identity;
    m.failed_identities = failed_identities;
    std::sort(m.failed_identities.begin(), m.failed_identities.end());
    for (const std::string& rel : present) {
        ManifestEntry e;
        e.path = rel;
        e.sha256 = sha256_file(root / rel);
        e.size = std::filesystem::file_size(root / rel);
        m.entries.push_back(std::move(e));
    }
    return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot create " + path.string());
    out << "# dataset-manifest v1\n";
    out << "# master_seed " << m.master_seed << "\n";
    out << "# config_sha256 " << m.config_sha256 << "\n";
    out << "# identities " << m.identities << "\n";
    out << "# samples_per_identity " << m.samples_per_identity << "\n";
    if (!m.failed_identities.empty()) {
        out << "# failed_identities";
        for (std::size_t i = 0; i < m.failed_identities.size(); ++i)
            out << (i ? "," : " ") << m.failed_identities[i];
        out << "\n";
    }
    out << "# files " << m.entries.size() << "\n";
    for (const ManifestEntry& e : m.entries)
        out << e.sha256 << "  " << e.size << "  " << e.path << "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open manifest " + path.string());
    Manifest m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string key;
            hs >> key;
            if (key == "master_seed") hs >> m.master_seed;
            else if (key == "config_sha256") hs >> m.config_sha256;
            else if (key == "identities") hs >> m.identities;
            else if (key == "samples_per_identity") hs >> m.samples_per_identity;
            else if (key == "failed_identities") {
                std::string list;
                hs >> list;
                std::istringstream ls(list);
                std::string tok;
                while (std::getline(ls, tok, ','))
                    if (!tok.empty()) m.failed_identities.push_back(std::stoi(tok));
            }
            continue;
        }
        std::istringstream es(line);
        ManifestEntry e;
        if (!(es >> e.sha256 >> e.size >> e.path))
            throw IntegrityError("malformed manifest line: " + line);
        m.entries.push_back(std::move(e));
    }
    return m;
}

VerifyReport verify_dataset(const std::filesystem::path& root) {
    const Manifest m = read_manifest(root / "manifest.txt");
    std::vector<std::string> problems;
    VerifyReport report;

    std::set<std::string> listed;
    for (const ManifestEntry& e : m.entries) {
        listed.insert(e.path);
        const auto p = root / e.path;
        if (!std::filesystem::exists(p)) {
            problems.push_back("missing: " + e.path);
            continue;
        }
        const auto size = std::filesystem::file_size(p);
        if (size != e.size) {
            problems.push_back("size mismatch: " + e.path);
            continue;
        }
        if (sha256_file(p) != e.sha256) {
            problems.push_back("checksum mismatch: " + e.path);
            continue;
        }
        ++report.files_checked;
        report.bytes_checked += size;
    }
    for (const std::string& rel : walk_payload(root))
        if (!listed.count(rel)) problems.push_back("unlisted file: " + rel);

    if (!problems.empty()) {
        std::string msg = std::to_string(problems.size()) +
                          " integrity problem(s):";
        const std::size_t show = std::min<std::size_t>(problems.size(), 25);
        for (std::size_t i = 0; i < show; ++i) msg += "\n  " + problems[i];
        if (problems.size() > show) msg += "\n  ...";
        throw IntegrityError(msg);
    }
    return report;
}

} // namespace veingen
