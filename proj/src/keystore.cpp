#include "qdnet/keystore.hpp"

#include "qdnet/util.hpp"

namespace qdnet {

bool KeyStore::insert(StoredKey key) {
    std::lock_guard lock(mutex_);
    purge_locked(monotonic_s());
    return keys_.emplace(key.key_id, std::move(key)).second;
}

bool KeyStore::insert(const std::string& key_id,
                      std::vector<uint8_t> material,
                      const std::string& peer_sae) {
    StoredKey key;
    key.key_id = key_id;
    key.material = std::move(material);
    key.peer_sae = peer_sae;
    key.stored_at = monotonic_s();
    key.ttl_s = default_ttl_s_;
    return insert(std::move(key));
}

std::optional<StoredKey> KeyStore::get(const std::string& key_id) {
    std::lock_guard lock(mutex_);
    double now = monotonic_s();
    purge_locked(now);
    auto it = keys_.find(key_id);
    if (it == keys_.end()) return std::nullopt;
    return it->second;
}

size_t KeyStore::count_for_peer(const std::string& peer_sae) {
    std::lock_guard lock(mutex_);
    purge_locked(monotonic_s());
    size_t count = 0;
    for (const auto& [id, key] : keys_)
        if (key.peer_sae == peer_sae) ++count;
    return count;
}

size_t KeyStore::size() {
    std::lock_guard lock(mutex_);
    purge_locked(monotonic_s());
    return keys_.size();
}

void KeyStore::purge() {
    std::lock_guard lock(mutex_);
    purge_locked(monotonic_s());
}

void KeyStore::purge_locked(double now) {
    for (auto it = keys_.begin(); it != keys_.end();) {
        if (now > it->second.stored_at + it->second.ttl_s) {
            it = keys_.erase(it);
        } else {
            ++it;
        }
    }
}

}  // namespace qdnet
