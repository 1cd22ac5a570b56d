#include "hdms/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace hdms {

namespace fs = std::filesystem;

namespace {

// All writers go through a temp file + rename so interrupted runs never
// leave truncated artifacts at the target path.
void atomic_write(const fs::path& path, const std::string& bytes) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PipelineError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw PipelineError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// PNM header token reader: skips whitespace and '#' comments.
class PnmParser {
public:
    explicit PnmParser(const std::string& bytes) : bytes_(bytes) {}

    std::string token() {
        skip_space();
        std::string t;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
            t += bytes_[pos_++];
        if (t.empty()) throw TruncatedFile("unexpected end of PNM header");
        return t;
    }

    long number() {
        const std::string t = token();
        try {
            return std::stol(t);
        } catch (...) {
            throw UnsupportedFormat("bad number in PNM header: " + t);
        }
    }

    // Position of the raster: one whitespace byte after the maxval token.
    std::size_t raster_offset() {
        if (pos_ >= bytes_.size()) throw TruncatedFile("missing raster data");
        return ++pos_;
    }

private:
    void skip_space() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

struct PnmRaster {
    int width, height, maxval, channels;
    std::size_t offset;
};

PnmRaster parse_pnm(const std::string& bytes, const fs::path& path) {
    PnmParser parser(bytes);
    const std::string magic = parser.token();
    int channels;
    if (magic == "P6") channels = 3;
    else if (magic == "P5") channels = 1;
    else throw UnsupportedFormat(path.string() + ": only binary P5/P6 supported, got " + magic);
    const long w = parser.number();
    const long h = parser.number();
    const long maxval = parser.number();
    if (w < 1 || h < 1) throw UnsupportedFormat(path.string() + ": non-positive dimensions");
    if (w * h > (1L << 31)) throw DimensionOverflow(path.string() + ": more than 2^31 pixels");
    if (maxval != 255 && maxval != 65535)
        throw UnsupportedFormat(path.string() + ": unsupported maxval " + std::to_string(maxval));
    return {static_cast<int>(w), static_cast<int>(h), static_cast<int>(maxval), channels,
            parser.raster_offset()};
}

void append_u16be(std::string& s, unsigned v) {
    s += static_cast<char>((v >> 8) & 0xff);
    s += static_cast<char>(v & 0xff);
}

void append_u32le(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s += static_cast<char>((v >> (8 * i)) & 0xff);
}

void append_u64le(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s += static_cast<char>((v >> (8 * i)) & 0xff);
}

void append_u16le(std::string& s, std::uint16_t v) {
    s += static_cast<char>(v & 0xff);
    s += static_cast<char>((v >> 8) & 0xff);
}

class ByteReader {
public:
    ByteReader(const std::string& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

    std::uint32_t u32le() { return static_cast<std::uint32_t>(uint_le(4)); }
    std::uint64_t u64le() { return uint_le(8); }
    std::uint16_t u16le() { return static_cast<std::uint16_t>(uint_le(2)); }

    std::string raw(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }
    std::size_t size() const { return bytes_.size(); }

private:
    std::uint64_t uint_le(int n) {
        need(n);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += n;
        return v;
    }

    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw TruncatedFile(path_.string() + ": file too short");
    }

    const std::string& bytes_;
    fs::path path_;
    std::size_t pos_ = 0;
};

} // namespace

RasterImage read_image(const fs::path& path) {
    const std::string bytes = slurp(path);
    const PnmRaster hdr = parse_pnm(bytes, path);
    if (hdr.maxval != 255)
        throw UnsupportedFormat(path.string() + ": images must be 8-bit");
    RasterImage img(hdr.width, hdr.height, hdr.channels);
    if (hdr.offset + img.data.size() > bytes.size())
        throw TruncatedFile(path.string() + ": raster shorter than header promises");
    std::memcpy(img.data.data(), bytes.data() + hdr.offset, img.data.size());
    return img;
}

void write_image(const fs::path& path, const RasterImage& image) {
    if (!image.valid()) throw DimensionMismatch("refusing to write invalid raster");
    std::string out = (image.channels == 3 ? "P6\n" : "P5\n");
    out += std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(image.data.data()), image.data.size());
    atomic_write(path, out);
}

BinaryMask read_mask(const fs::path& path) {
    const RasterImage img = read_image(path);
    if (img.channels != 1) throw UnsupportedFormat(path.string() + ": masks must be P5");
    BinaryMask mask(img.width, img.height);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = img.data[i] >= 128;
    return mask;
}

void write_mask(const fs::path& path, const BinaryMask& mask) {
    RasterImage img(mask.width, mask.height, 1);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) img.data[i] = mask.bits[i] ? 255 : 0;
    write_image(path, img);
}

ProbMap read_prob_map(const fs::path& path) {
    const std::string bytes = slurp(path);
    const PnmRaster hdr = parse_pnm(bytes, path);
    if (hdr.channels != 1 || hdr.maxval != 65535)
        throw UnsupportedFormat(path.string() + ": probability maps are 16-bit P5");
    ProbMap map(hdr.width, hdr.height);
    const std::size_t n = map.prob.size();
    if (hdr.offset + 2 * n > bytes.size())
        throw TruncatedFile(path.string() + ": raster shorter than header promises");
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned hi = static_cast<unsigned char>(bytes[hdr.offset + 2 * i]);
        const unsigned lo = static_cast<unsigned char>(bytes[hdr.offset + 2 * i + 1]);
        map.prob[i] = static_cast<float>((hi << 8) | lo) / 65535.0f;
    }
    return map;
}

void write_prob_map(const fs::path& path, const ProbMap& map) {
    std::string out = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) +
                      "\n65535\n";
    for (float p : map.prob) {
        const double clamped = std::min(1.0, std::max(0.0, static_cast<double>(p)));
        append_u16be(out, static_cast<unsigned>(std::lround(clamped * 65535.0)));
    }
    atomic_write(path, out);
}

StainProfile read_stain_profile(const fs::path& path) {
    std::istringstream in(slurp(path));
    StainProfile profile;
    double values[8];
    for (double& v : values)
        if (!(in >> v)) throw TruncatedFile(path.string() + ": expected 8 values");
    int idx = 0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) profile.stain_matrix[r][c] = values[idx++];
    profile.max_concentrations[0] = values[6];
    profile.max_concentrations[1] = values[7];
    return profile;
}

void write_stain_profile(const fs::path& path, const StainProfile& profile) {
    char buf[64];
    std::string out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) {
            std::snprintf(buf, sizeof buf, "%.15g\n", profile.stain_matrix[r][c]);
            out += buf;
        }
    for (double m : profile.max_concentrations) {
        std::snprintf(buf, sizeof buf, "%.15g\n", m);
        out += buf;
    }
    atomic_write(path, out);
}

// --- checkpoint -------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'H', 'D', 'M', 'S'};
constexpr std::uint32_t kCheckpointVersion = 1;
} // namespace

void save_checkpoint(const fs::path& path, const VitParams& params) {
    const auto tensors = params.tensor_list();

    // Directory size must be known before offsets can be assigned.
    std::size_t dir_size = 4 + 4 + 7 * 4 + 4;
    for (const auto& [name, m] : tensors) dir_size += 2 + name.size() + 4 + 2 * 4 + 8;

    std::string out;
    out.append(kMagic, 4);
    append_u32le(out, kCheckpointVersion);
    const PipelineConfig& c = params.config;
    for (int v : {c.tile_size, c.stride, c.patch_size, c.embed_dim, c.depth, c.heads,
                  c.downsample_factor})
        append_u32le(out, static_cast<std::uint32_t>(v));
    append_u32le(out, static_cast<std::uint32_t>(tensors.size()));

    std::uint64_t offset = dir_size;
    for (const auto& [name, m] : tensors) {
        append_u16le(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        append_u32le(out, 2);
        append_u32le(out, static_cast<std::uint32_t>(m->rows));
        append_u32le(out, static_cast<std::uint32_t>(m->cols));
        append_u64le(out, offset);
        offset += m->a.size() * 4;
    }
    for (const auto& [name, m] : tensors) {
        for (float v : m->a) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            append_u32le(out, bits);
        }
    }
    atomic_write(path, out);
}

std::pair<VitParams, PipelineConfig> load_checkpoint(const fs::path& path) {
    const std::string bytes = slurp(path);
    ByteReader in(bytes, path);
    if (in.raw(4) != std::string(kMagic, 4)) throw BadMagic(path.string() + ": bad magic");
    const std::uint32_t version = in.u32le();
    if (version != kCheckpointVersion)
        throw VersionMismatch(path.string() + ": format version " + std::to_string(version));

    PipelineConfig cfg;
    cfg.tile_size = static_cast<int>(in.u32le());
    cfg.stride = static_cast<int>(in.u32le());
    cfg.patch_size = static_cast<int>(in.u32le());
    cfg.embed_dim = static_cast<int>(in.u32le());
    cfg.depth = static_cast<int>(in.u32le());
    cfg.heads = static_cast<int>(in.u32le());
    cfg.downsample_factor = static_cast<int>(in.u32le());

    const std::uint32_t count = in.u32le();
    struct Entry {
        std::uint32_t rows, cols;
        std::uint64_t offset;
    };
    std::map<std::string, Entry> directory;
    std::uint64_t prev_offset = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = in.u16le();
        const std::string name = in.raw(name_len);
        const std::uint32_t rank = in.u32le();
        if (rank != 2) throw CorruptDirectory(path.string() + ": unexpected tensor rank");
        Entry e;
        e.rows = in.u32le();
        e.cols = in.u32le();
        e.offset = in.u64le();
        if (e.offset <= prev_offset && i > 0)
            throw CorruptDirectory(path.string() + ": directory offsets not increasing");
        const std::uint64_t bytes_needed = static_cast<std::uint64_t>(e.rows) * e.cols * 4;
        if (e.offset + bytes_needed > bytes.size())
            throw CorruptDirectory(path.string() + ": tensor " + name + " overruns file");
        if (!directory.emplace(name, e).second)
            throw CorruptDirectory(path.string() + ": duplicate tensor " + name);
        prev_offset = e.offset;
    }

    VitParams params;
    try {
        params = VitParams::shaped(cfg);
    } catch (const InvalidConfig& e) {
        throw CorruptDirectory(path.string() + ": embedded config invalid: " + e.what());
    }
    params.for_each_tensor([&](const std::string& name, Mat<float>& m) {
        const auto it = directory.find(name);
        if (it == directory.end())
            throw CorruptDirectory(path.string() + ": missing tensor " + name);
        const Entry& e = it->second;
        if (static_cast<int>(e.rows) != m.rows || static_cast<int>(e.cols) != m.cols)
            throw CorruptDirectory(path.string() + ": tensor " + name +
                                   " dimensions disagree with embedded config");
        for (std::size_t j = 0; j < m.a.size(); ++j) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<std::uint32_t>(
                            static_cast<unsigned char>(bytes[e.offset + 4 * j + b]))
                        << (8 * b);
            std::memcpy(&m.a[j], &bits, 4);
        }
        directory.erase(it);
    });
    if (!directory.empty())
        throw CorruptDirectory(path.string() + ": unknown extra tensor " +
                               directory.begin()->first);
    return {std::move(params), cfg};
}

// --- run configuration ------------------------------------------------------

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw InvalidConfig("bad boolean for " + key + ": " + v);
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value) {
    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };
    auto as_u64 = [&] { return static_cast<std::uint64_t>(std::stoull(value)); };
    auto as_u8 = [&] {
        const int v = std::stoi(value);
        if (v < 0 || v > 255) throw InvalidConfig(key + " out of byte range");
        return static_cast<std::uint8_t>(v);
    };
    try {
        if (key == "tile_size") c.pipeline.tile_size = as_int();
        else if (key == "stride") c.pipeline.stride = as_int();
        else if (key == "patch_size") c.pipeline.patch_size = as_int();
        else if (key == "embed_dim") c.pipeline.embed_dim = as_int();
        else if (key == "depth") c.pipeline.depth = as_int();
        else if (key == "heads") c.pipeline.heads = as_int();
        else if (key == "downsample_factor") c.pipeline.downsample_factor = as_int();
        else if (key == "tiles_per_slide") c.pipeline.tiles_per_slide = as_int();
        else if (key == "confidence_threshold") c.pipeline.confidence_threshold = as_double();
        else if (key == "base_lr") c.train.base_lr = as_double();
        else if (key == "weight_decay") c.train.weight_decay = as_double();
        else if (key == "beta1") c.train.beta1 = as_double();
        else if (key == "beta2") c.train.beta2 = as_double();
        else if (key == "eps") c.train.eps = as_double();
        else if (key == "epochs") c.train.epochs = as_int();
        else if (key == "warmup_epochs") c.train.warmup_epochs = as_int();
        else if (key == "batch_size") c.train.batch_size = as_int();
        else if (key == "seed") c.train.seed = as_u64();
        else if (key == "augment_rot90s") c.train.augment.rot90s = parse_bool(value, key);
        else if (key == "augment_flips") c.train.augment.flips = parse_bool(value, key);
        else if (key == "augment_scaling") c.train.augment.scaling = parse_bool(value, key);
        else if (key == "augment_scale_min") c.train.augment.scale_min = as_double();
        else if (key == "augment_scale_max") c.train.augment.scale_max = as_double();
        else if (key == "io_white") c.macenko.io_white = as_double();
        else if (key == "beta_od_floor") c.macenko.beta_od_floor = as_double();
        else if (key == "alpha_percentile") c.macenko.alpha_percentile = as_double();
        else if (key == "concentration_percentile")
            c.macenko.concentration_percentile = as_double();
        else if (key == "nonnegative_solve") c.macenko.nonnegative_solve = parse_bool(value, key);
        else if (key == "phantom_width") c.phantom.width = as_int();
        else if (key == "phantom_height") c.phantom.height = as_int();
        else if (key == "n_plexus") c.phantom.n_plexus = as_int();
        else if (key == "band_thickness_min") c.phantom.band_thickness_min = as_int();
        else if (key == "band_thickness_max") c.phantom.band_thickness_max = as_int();
        else if (key == "blob_radius_min") c.phantom.blob_radius_min = as_int();
        else if (key == "blob_radius_max") c.phantom.blob_radius_max = as_int();
        else if (key == "noise_std") c.phantom.noise_std = as_double();
        else if (key == "background_r") c.phantom.background_color[0] = as_u8();
        else if (key == "background_g") c.phantom.background_color[1] = as_u8();
        else if (key == "background_b") c.phantom.background_color[2] = as_u8();
        else if (key == "muscularis_r") c.phantom.muscularis_color[0] = as_u8();
        else if (key == "muscularis_g") c.phantom.muscularis_color[1] = as_u8();
        else if (key == "muscularis_b") c.phantom.muscularis_color[2] = as_u8();
        else if (key == "plexus_r") c.phantom.plexus_color[0] = as_u8();
        else if (key == "plexus_g") c.phantom.plexus_color[1] = as_u8();
        else if (key == "plexus_b") c.phantom.plexus_color[2] = as_u8();
        else if (key == "n_slides") c.n_slides = as_int();
        else if (key == "n_folds") c.n_folds = as_int();
        else if (key == "inclusion_fraction") c.inclusion_fraction = as_double();
        else throw InvalidConfig("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
        throw InvalidConfig("bad value for " + key + ": " + value);
    } catch (const std::out_of_range&) {
        throw InvalidConfig("value out of range for " + key + ": " + value);
    }
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

} // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidConfig("config line " + std::to_string(lineno) + " is not key = value");
        apply_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return config;
}

RunConfig read_run_config(const fs::path& path) { return parse_run_config(slurp(path)); }

void apply_override(RunConfig& config, const std::string& key_value) {
    const std::size_t eq = key_value.find('=');
    if (eq == std::string::npos)
        throw InvalidConfig("override must be key=value: " + key_value);
    apply_key(config, trim(key_value.substr(0, eq)), trim(key_value.substr(eq + 1)));
}

// --- slide corpus -----------------------------------------------------------

void write_slide(const fs::path& dir, const SlideRecord& record) {
    const std::string& id = record.slide_id;
    write_image(dir / (id + ".ppm"), record.image);
    write_mask(dir / (id + "_muscularis.pgm"), record.muscularis_gt);
    write_mask(dir / (id + "_plexus.pgm"), record.plexus_gt);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", record.microns_per_pixel);
    atomic_write(dir / (id + ".meta"), "slide_id = " + id + "\npatient_id = " +
                                           record.patient_id + "\nmicrons_per_pixel = " + buf +
                                           "\n");
}

SlideRecord read_slide(const fs::path& dir, const std::string& slide_id) {
    SlideRecord record;
    record.slide_id = slide_id;
    record.image = read_image(dir / (slide_id + ".ppm"));
    record.muscularis_gt = read_mask(dir / (slide_id + "_muscularis.pgm"));
    record.plexus_gt = read_mask(dir / (slide_id + "_plexus.pgm"));
    std::istringstream meta(slurp(dir / (slide_id + ".meta")));
    std::string line;
    while (std::getline(meta, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "patient_id") record.patient_id = value;
        else if (key == "microns_per_pixel") record.microns_per_pixel = std::stod(value);
    }
    validate_slide(record);
    return record;
}

void write_corpus(const fs::path& dir, const std::vector<SlideRecord>& slides) {
    fs::create_directories(dir);
    std::string index;
    for (const auto& slide : slides) {
        write_slide(dir, slide);
        index += slide.slide_id + "\n";
    }
    atomic_write(dir / "slides.txt", index);
}

std::vector<SlideRecord> read_corpus(const fs::path& dir) {
    std::istringstream index(slurp(dir / "slides.txt"));
    std::vector<SlideRecord> slides;
    std::string id;
    while (std::getline(index, id)) {
        id = trim(id);
        if (!id.empty()) slides.push_back(read_slide(dir, id));
    }
    return slides;
}

// --- CSV --------------------------------------------------------------------

std::string metrics_csv(const std::vector<MetricReport>& reports) {
    std::string out =
        "slide_id,dice,precision,recall,pir,tp,fp,fn,tn,n_gt_regions,n_included\n";
    char buf[256];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f,%zu,%zu,%zu,%zu,%d,%d\n",
                      r.slide_id.c_str(), r.dice, r.precision, r.recall, r.pir, r.counts.tp,
                      r.counts.fp, r.counts.fn, r.counts.tn, r.n_gt_regions, r.n_included);
        out += buf;
    }
    return out;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::string out = "threshold,mean_dice,mean_pir,mean_precision,mean_recall\n";
    char buf[160];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f,%.4f\n", p.threshold, p.mean_dice,
                      p.mean_pir, p.mean_precision, p.mean_recall);
        out += buf;
    }
    return out;
}

std::string train_log_csv(const std::vector<EpochLogEntry>& entries) {
    std::string out = "epoch,mean_loss,lr\n";
    char buf[96];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%d,%.6f,%.8f\n", e.epoch, e.mean_loss, e.lr);
        out += buf;
    }
    return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
    atomic_write(path, content);
}

std::string read_text_file(const fs::path& path) { return slurp(path); }

} // namespace hdms
