#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace topdown {

// One downloadable artifact. If sha256 is empty the digest is not enforced;
// the computed value is logged and written to a .sha256 sidecar instead.
// gunzip=true decompresses the payload before the digest check (digests
// always refer to the decompressed file).
struct FetchItem {
    std::string url;
    std::string filename;
    std::string sha256;
    bool gunzip = false;
};

std::string sha256_hex(const unsigned char* data, size_t len);
std::string sha256_file(const std::string& path);

// zlib inflate accepting both gzip and raw deflate streams.
std::vector<unsigned char> gunzip_bytes(const std::vector<unsigned char>& compressed);

// Downloads every item into dir (skipping files already present with a
// matching digest). http:// and https:// URLs are supported. Throws on
// network failure or digest mismatch; partial downloads never overwrite a
// previously verified file.
void fetch_to(const std::string& dir, const std::vector<FetchItem>& items, std::ostream& log);

// Built-in manifests. MNIST digests are pinned to the canonical IDX files;
// Fashion-MNIST entries are unpinned (digest recorded on first download).
std::vector<FetchItem> mnist_manifest();
std::vector<FetchItem> fashion_mnist_manifest();
std::vector<FetchItem> cifar10_manifest();

}  // namespace topdown
