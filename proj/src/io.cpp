#include "wavaug/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wavaug {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 24));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64s(std::vector<unsigned char>& out, const std::vector<double>& xs) {
    const std::size_t at = out.size();
    out.resize(at + xs.size() * 8);
    std::memcpy(out.data() + at, xs.data(), xs.size() * 8);
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw std::runtime_error("truncated checkpoint: " + path);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | buf[pos + i];
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | buf[pos + i];
        pos += 8;
        return v;
    }
    void f64s(std::vector<double>& xs, std::size_t n) {
        need(n * 8);
        xs.resize(n);
        std::memcpy(xs.data(), buf.data() + pos, n * 8);
        pos += n * 8;
    }
};

// Both parameter tensors and statistics in one fixed traversal order, so the
// writer and reader can never disagree.
template <typename Model, typename Fn>
void for_each_tensor(Model& m, Fn fn) {
    for (auto& cv : m.convs) {
        fn(cv.weight);
        fn(cv.bias);
    }
    for (auto& nl : m.norms) {
        fn(nl.gamma);
        fn(nl.beta);
    }
    fn(m.fc1.weight);
    fn(m.fc1.bias);
    fn(m.fc2.weight);
    fn(m.fc2.bias);
    for (auto& st : m.stats_clean) {
        fn(st.mean);
        fn(st.var);
    }
    for (auto& st : m.stats_adv) {
        fn(st.mean);
        fn(st.var);
    }
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelState& model) {
    std::vector<unsigned char> payload;
    put_u32(payload, kCheckpointVersion);
    put_u32(payload, model.norm_kind == NormKind::batch_norm ? 0u : 1u);
    put_u64(payload, model.rng_seed);
    put_u32(payload, static_cast<std::uint32_t>(model.input_hw));
    put_u32(payload, static_cast<std::uint32_t>(model.in_channels));
    put_u32(payload, static_cast<std::uint32_t>(model.num_classes));

    std::vector<const Tensor*> tensors;
    for_each_tensor(model, [&](const Tensor& t) { tensors.push_back(&t); });
    put_u32(payload, static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor* t : tensors) {
        put_u32(payload, static_cast<std::uint32_t>(t->shape.size()));
        for (std::size_t d : t->shape) put_u32(payload, static_cast<std::uint32_t>(d));
    }
    for (const Tensor* t : tensors) put_f64s(payload, t->data);

    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0L, payload.data(), static_cast<uInt>(payload.size())));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("WAVG", 4);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    std::vector<unsigned char> tail;
    put_u32(tail, crc);
    out.write(reinterpret_cast<const char*>(tail.data()), 4);
    if (!out) throw std::runtime_error("write failed: " + path);
}

ModelState load_checkpoint(const std::string& path) {
    std::vector<unsigned char> buf = read_file_bytes(path);
    if (buf.size() < 8 || std::memcmp(buf.data(), "WAVG", 4) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    // trailing CRC covers everything between magic and itself
    const std::size_t payload_len = buf.size() - 8;
    std::uint32_t stored = 0;
    for (int i = 3; i >= 0; --i) stored = (stored << 8) | buf[buf.size() - 4 + i];
    const std::uint32_t computed = static_cast<std::uint32_t>(
        crc32(0L, buf.data() + 4, static_cast<uInt>(payload_len)));
    if (stored != computed)
        throw std::runtime_error("checkpoint CRC mismatch: " + path);

    std::vector<unsigned char> payload(buf.begin() + 4, buf.end() - 4);
    Reader r{payload, 0, path};
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " +
                                 std::to_string(version) + ": " + path);
    const std::uint32_t kind = r.u32();
    if (kind > 1) throw std::runtime_error("bad norm kind in " + path);
    const std::uint64_t seed = r.u64();
    const std::uint32_t hw = r.u32();
    const std::uint32_t ch = r.u32();
    const std::uint32_t classes = r.u32();

    ModelState m = make_model(seed, kind == 0 ? NormKind::batch_norm : NormKind::layer_norm,
                              hw, ch, classes);
    std::vector<Tensor*> tensors;
    for_each_tensor(m, [&](Tensor& t) { tensors.push_back(&t); });

    const std::uint32_t count = r.u32();
    if (count != tensors.size())
        throw std::runtime_error("checkpoint manifest count mismatch: " + path);
    for (Tensor* t : tensors) {
        const std::uint32_t nd = r.u32();
        std::vector<std::size_t> shape(nd);
        for (std::uint32_t i = 0; i < nd; ++i) shape[i] = r.u32();
        if (shape != t->shape)
            throw std::runtime_error("checkpoint shape mismatch: " + path);
    }
    for (Tensor* t : tensors) r.f64s(t->data, Tensor::count(t->shape));
    if (r.pos != payload.size())
        throw std::runtime_error("checkpoint has trailing bytes: " + path);
    return m;
}

std::uint32_t file_crc32(const std::string& path) {
    std::vector<unsigned char> buf = read_file_bytes(path);
    return static_cast<std::uint32_t>(
        crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
}

// ---- PNG --------------------------------------------------------------------

namespace {

void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

std::uint32_t get_u32_be(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void write_chunk(std::vector<unsigned char>& out, const char type[4],
                 const std::vector<unsigned char>& data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    std::vector<unsigned char> td(type, type + 4);
    td.insert(td.end(), data.begin(), data.end());
    out.insert(out.end(), td.begin(), td.end());
    put_u32_be(out, static_cast<std::uint32_t>(
                        crc32(0L, td.data(), static_cast<uInt>(td.size()))));
}

unsigned char to_byte(double v) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

Image Image::from_grid(const Grid& g) {
    Image im;
    im.rows = g.rows;
    im.cols = g.cols;
    im.channels = 1;
    im.data = g.v;
    return im;
}

Grid Image::to_grid() const {
    Grid g(rows, cols);
    for (std::size_t i = 0; i < rows * cols; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) acc += data[i * channels + c];
        g.v[i] = acc / static_cast<double>(channels);
    }
    return g;
}

void write_png(const std::string& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("write_png: channels must be 1 or 3");
    if (img.rows == 0 || img.cols == 0)
        throw std::invalid_argument("write_png: empty image");
    const std::size_t stride = img.cols * img.channels;
    std::vector<unsigned char> raw((1 + stride) * img.rows);
    for (std::size_t y = 0; y < img.rows; ++y) {
        raw[y * (1 + stride)] = 0;  // filter type 0
        for (std::size_t i = 0; i < stride; ++i)
            raw[y * (1 + stride) + 1 + i] = to_byte(img.data[y * stride + i]);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png: deflate failed");
    comp.resize(comp_len);

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<unsigned char> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.cols));
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.rows));
    ihdr.push_back(8);                                  // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);          // gray / truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    write_chunk(out, "IHDR", ihdr);
    write_chunk(out, "IDAT", comp);
    write_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Image read_png(const std::string& path) {
    std::vector<unsigned char> buf = read_file_bytes(path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw std::runtime_error("not a PNG file: " + path);
    std::size_t pos = 8;
    std::size_t w = 0, h = 0, channels = 0;
    std::vector<unsigned char> idat;
    bool saw_end = false;
    while (pos + 12 <= buf.size() && !saw_end) {
        const std::uint32_t len = get_u32_be(&buf[pos]);
        if (pos + 12 + len > buf.size())
            throw std::runtime_error("truncated PNG chunk: " + path);
        const unsigned char* type = &buf[pos + 4];
        const unsigned char* data = &buf[pos + 8];
        const std::uint32_t stored = get_u32_be(&buf[pos + 8 + len]);
        const std::uint32_t computed = static_cast<std::uint32_t>(
            crc32(0L, type, static_cast<uInt>(4 + len)));
        if (stored != computed)
            throw std::runtime_error("PNG chunk CRC mismatch: " + path);
        const std::string t(reinterpret_cast<const char*>(type), 4);
        if (t == "IHDR") {
            if (len != 13) throw std::runtime_error("bad IHDR: " + path);
            w = get_u32_be(data);
            h = get_u32_be(data + 4);
            const int depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8 || (color != 0 && color != 2) || interlace != 0)
                throw std::runtime_error("unsupported PNG format (need 8-bit gray/RGB, no interlace): " + path);
            channels = color == 0 ? 1 : 3;
        } else if (t == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (t == "IEND") {
            saw_end = true;
        }
        pos += 12 + len;
    }
    if (w == 0 || h == 0 || !saw_end)
        throw std::runtime_error("malformed PNG: " + path);

    const std::size_t stride = w * channels;
    std::vector<unsigned char> raw((1 + stride) * h);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(),
                   static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw std::runtime_error("PNG inflate failed: " + path);

    // undo scanline filters in place (bpp = channels for 8-bit)
    const std::size_t bpp = channels;
    std::vector<unsigned char> px(h * stride);
    for (std::size_t y = 0; y < h; ++y) {
        const unsigned char ft = raw[y * (1 + stride)];
        const unsigned char* src = &raw[y * (1 + stride) + 1];
        unsigned char* dst = &px[y * stride];
        const unsigned char* up = y > 0 ? &px[(y - 1) * stride] : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= bpp ? dst[i - bpp] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= bpp) ? up[i - bpp] : 0;
            int v = src[i];
            switch (ft) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default:
                    throw std::runtime_error("bad PNG filter type: " + path);
            }
            dst[i] = static_cast<unsigned char>(v & 0xff);
        }
    }

    Image im;
    im.rows = h;
    im.cols = w;
    im.channels = channels;
    im.data.resize(px.size());
    for (std::size_t i = 0; i < px.size(); ++i)
        im.data[i] = static_cast<double>(px[i]) / 255.0;
    return im;
}

// ---- PGM --------------------------------------------------------------------

void write_pgm(const std::string& path, const Grid& img) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "P5\n" << img.cols << " " << img.rows << "\n255\n";
    for (double v : img.v) f.put(static_cast<char>(to_byte(v)));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Grid read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw std::runtime_error("not a P5 PGM: " + path);
    auto next_token = [&]() {
        std::string tok;
        while (f >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(f, rest);
                continue;
            }
            return tok;
        }
        throw std::runtime_error("truncated PGM header: " + path);
    };
    const std::size_t w = std::stoul(next_token());
    const std::size_t h = std::stoul(next_token());
    const std::size_t maxval = std::stoul(next_token());
    if (maxval != 255) throw std::runtime_error("PGM maxval must be 255: " + path);
    f.get();  // single whitespace after header
    Grid g(h, w);
    std::vector<unsigned char> buf(w * h);
    if (!f.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size())))
        throw std::runtime_error("truncated PGM data: " + path);
    for (std::size_t i = 0; i < buf.size(); ++i)
        g.v[i] = static_cast<double>(buf[i]) / 255.0;
    return g;
}

// ---- text ------------------------------------------------------------------

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (std::size_t i = 0; i < header.size(); ++i)
        f << (i ? "," : "") << header[i];
    f << "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw std::invalid_argument("write_csv: row width != header width");
        for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
        f << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

void append_jsonl(const std::string& path, const std::string& json_line) {
    std::ofstream f(path, std::ios::app);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << json_line << "\n";
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace wavaug
