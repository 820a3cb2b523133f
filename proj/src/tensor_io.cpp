#include <cstring>
#include <fstream>

#include "ltf/error.hpp"
#include "ltf/tensor.hpp"

namespace ltf {

namespace {

void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("tensor file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64_le(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64_le(os, bits);
}

double get_f64_le(std::istream& is) {
    const std::uint64_t bits = get_u64_le(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path);
    put_u64_le(os, t.rank());
    for (auto d : t.shape()) put_u64_le(os, d);
    for (double v : t.values()) put_f64_le(os, v);
    if (!os) throw IoError("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for read: " + path);
    const std::uint64_t rank = get_u64_le(is);
    if (rank > 8) throw IoError("implausible tensor rank in " + path);
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
        d = static_cast<std::size_t>(get_u64_le(is));
        n *= d;
    }
    std::vector<double> data(n);
    for (auto& v : data) v = get_f64_le(is);
    return Tensor::from(std::move(shape), std::move(data));
}

}  // namespace ltf
