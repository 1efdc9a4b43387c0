// Receive one byte at a time through a ready flag.
uint8 URX0_IEN @ 0xC1.7;
uint8 UDR @ 0xC6;
volatile uint8 ready;
volatile uint8 byte;
uint8 sum;

ISR(USART0_RX_vect) {
    if (ready == 0) {
        byte = UDR;
        ready = 1;
    }
}

void main() {
    URX0_IEN = 1;
    while (1) {
        while (ready == 0);
        sum = (sum + byte) & 7;
        ready = 0;
    }
}
