#include "topdown/fetch.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace topdown {

std::string sha256_hex(const unsigned char* data, size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int dlen = 0;
    if (!EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr))
        throw std::runtime_error("SHA-256 digest computation failed");
    std::string hex(dlen * 2, '0');
    static const char* k = "0123456789abcdef";
    for (unsigned i = 0; i < dlen; ++i) {
        hex[2 * i] = k[digest[i] >> 4];
        hex[2 * i + 1] = k[digest[i] & 0xf];
    }
    return hex;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    return sha256_hex(buf.data(), buf.size());
}

std::vector<unsigned char> gunzip_bytes(const std::vector<unsigned char>& compressed) {
    z_stream zs{};
    // 15+32: accept gzip or zlib headers.
    if (inflateInit2(&zs, 15 + 32) != Z_OK) throw std::runtime_error("inflateInit failed");
    std::vector<unsigned char> out;
    std::vector<unsigned char> chunk(1 << 16);
    zs.next_in = const_cast<unsigned char*>(compressed.data());
    zs.avail_in = static_cast<uInt>(compressed.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk.data();
        zs.avail_out = static_cast<uInt>(chunk.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw std::runtime_error(std::string("gzip decompression failed: ") +
                                     (zs.msg ? zs.msg : zError(rc)));
        }
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    }
    inflateEnd(&zs);
    return out;
}

namespace {

// Splits "https://host[:port]/path" into a client origin and a path.
struct UrlParts {
    std::string origin;
    std::string path;
};

UrlParts split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("URL '" + url + "' has no scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    UrlParts p;
    p.origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    p.path = path_start == std::string::npos ? "/" : url.substr(path_start);
    return p;
}

std::vector<unsigned char> http_get(const std::string& url, std::ostream& log, int redirects_left = 5) {
    const UrlParts parts = split_url(url);
    httplib::Client client(parts.origin);
    client.set_follow_location(true);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    auto res = client.Get(parts.path);
    if (!res) throw std::runtime_error("request to '" + url + "' failed: " + httplib::to_string(res.error()));
    if (res->status >= 300 && res->status < 400 && res->has_header("Location") && redirects_left > 0) {
        const std::string loc = res->get_header_value("Location");
        log << "  redirect -> " << loc << "\n";
        return http_get(loc, log, redirects_left - 1);
    }
    if (res->status != 200)
        throw std::runtime_error("request to '" + url + "' returned HTTP " +
                                 std::to_string(res->status));
    return std::vector<unsigned char>(res->body.begin(), res->body.end());
}

}  // namespace

void fetch_to(const std::string& dir, const std::vector<FetchItem>& items, std::ostream& log) {
    std::filesystem::create_directories(dir);
    for (const auto& item : items) {
        const std::string dest = (std::filesystem::path(dir) / item.filename).string();
        if (std::filesystem::exists(dest)) {
            const std::string have = sha256_file(dest);
            if (item.sha256.empty() || have == item.sha256) {
                log << item.filename << ": present"
                    << (item.sha256.empty() ? " (digest " + have + ", unpinned)" : ", digest ok")
                    << "\n";
                continue;
            }
            log << item.filename << ": present but digest mismatch, refetching\n";
        }
        log << item.filename << ": downloading " << item.url << "\n";
        std::vector<unsigned char> body = http_get(item.url, log);
        if (item.gunzip) body = gunzip_bytes(body);
        const std::string have = sha256_hex(body.data(), body.size());
        if (!item.sha256.empty() && have != item.sha256)
            throw std::runtime_error(item.filename + ": digest mismatch: got " + have +
                                     ", expected " + item.sha256);
        std::ofstream out(dest, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(body.data()),
                  static_cast<std::streamsize>(body.size()));
        if (!out) throw std::runtime_error("write to '" + dest + "' failed");
        if (item.sha256.empty()) {
            std::ofstream side(dest + ".sha256", std::ios::trunc);
            side << have << "  " << item.filename << "\n";
            log << "  digest " << have << " recorded in " << item.filename << ".sha256\n";
        } else {
            log << "  digest ok\n";
        }
    }
}

std::vector<FetchItem> mnist_manifest() {
    // Digests are for the decompressed IDX files.
    const std::string base = "https://ossci-datasets.s3.amazonaws.com/mnist/";
    return {
        {base + "train-images-idx3-ubyte.gz", "train-images-idx3-ubyte",
         "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db", true},
        {base + "train-labels-idx1-ubyte.gz", "train-labels-idx1-ubyte",
         "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5", true},
        {base + "t10k-images-idx3-ubyte.gz", "t10k-images-idx3-ubyte",
         "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7", true},
        {base + "t10k-labels-idx1-ubyte.gz", "t10k-labels-idx1-ubyte",
         "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2", true},
    };
}

std::vector<FetchItem> fashion_mnist_manifest() {
    const std::string base =
        "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/";
    return {
        {base + "train-images-idx3-ubyte.gz", "train-images-idx3-ubyte", "", true},
        {base + "train-labels-idx1-ubyte.gz", "train-labels-idx1-ubyte", "", true},
        {base + "t10k-images-idx3-ubyte.gz", "t10k-images-idx3-ubyte", "", true},
        {base + "t10k-labels-idx1-ubyte.gz", "t10k-labels-idx1-ubyte", "", true},
    };
}

std::vector<FetchItem> cifar10_manifest() {
    // Single tarball; the caller is expected to unpack data_batch_*.bin.
    return {{"https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz", "cifar-10-binary.tar",
             "", true}};
}

}  // namespace topdown
